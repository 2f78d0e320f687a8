"""Random environments for the one-dimensional walk and their potential.

An environment is an i.i.d. sequence ``alpha_i`` (probability of stepping
up from site ``i``).  Sites are realized lazily: the value at site ``i`` is
a pure function of ``(seed, i)`` so a window can be grown in any order, by
any number of workers, without changing what was already seen.

The potential follows the telescoping convention ``S_0 = 0`` and
``S_k - S_{k-1} = eps_k`` for every ``k``, with
``eps_k = log((1 - alpha_k) / alpha_k)``; in particular ``S_{-1} = -eps_0``.
"""
from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "EnvDistribution",
    "Environment",
    "Potential",
    "WindowError",
    "check_hypotheses",
    "epsilon_at",
    "potential_range",
    "sample_environment",
]

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class WindowError(ValueError):
    """Raised when a query falls outside a window that cannot be extended."""


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def site_uniforms(seed: int, sites: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) variates keyed by ``(seed, site)``; counter-based."""
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    k = np.asarray(sites, dtype=np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        x = _splitmix(_splitmix(np.full(k.shape, s, dtype=np.uint64)) ^ k)
        x = _splitmix(x)
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class EnvDistribution:
    """Law of ``alpha_0``.

    Parameters
    ----------
    kind : {"two_point", "uniform", "tabulated"}
    eta0 : float
        Regularity constant; the support must lie in ``[eta0, 1 - eta0]``.
    values, probs : tuple of float
        Atoms and weights (``two_point`` and ``tabulated``).
    low, high : float
        Interval endpoints (``uniform``).
    """

    kind: str
    eta0: float
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta0 < 0.5:
            raise ValueError(f"eta0 must lie in (0, 1/2), got {self.eta0}")
        if self.kind in ("two_point", "tabulated"):
            if len(self.values) == 0 or len(self.values) != len(self.probs):
                raise ValueError("values and probs must be non-empty and of equal length")
            if self.kind == "two_point" and len(self.values) != 2:
                raise ValueError("two_point needs exactly two atoms")
            p = np.asarray(self.probs, dtype=float)
            if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
                raise ValueError("probs must be nonnegative and sum to one")
            support = [v for v, w in zip(self.values, self.probs) if w > 0]
        elif self.kind == "uniform":
            if not self.low < self.high:
                raise ValueError("uniform law needs low < high")
            support = [self.low, self.high]
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        for v in support:
            if not 0.0 < v < 1.0:
                raise ValueError(f"support point {v} outside (0, 1)")
            if v < self.eta0 - 1e-15 or v > 1.0 - self.eta0 + 1e-15:
                raise ValueError(f"support point {v} outside [eta0, 1 - eta0] with eta0={self.eta0}")

    @classmethod
    def two_point(cls, a: float = 0.3, b: float | None = None, p: float = 0.5,
                  eta0: float | None = None) -> "EnvDistribution":
        """Mass ``p`` at ``a`` and ``1 - p`` at ``b`` (default ``b = 1 - a``)."""
        b = 1.0 - a if b is None else b
        if eta0 is None:
            eta0 = min(a, 1 - a, b, 1 - b)
        return cls("two_point", eta0, values=(a, b), probs=(p, 1.0 - p))

    @classmethod
    def uniform(cls, low: float = 0.3, high: float | None = None,
                eta0: float | None = None) -> "EnvDistribution":
        high = 1.0 - low if high is None else high
        if eta0 is None:
            eta0 = min(low, 1 - high)
        return cls("uniform", eta0, low=low, high=high)

    @classmethod
    def tabulated(cls, values: Sequence[float], probs: Sequence[float],
                  eta0: float | None = None) -> "EnvDistribution":
        values = tuple(float(v) for v in values)
        if eta0 is None:
            eta0 = min(min(v, 1 - v) for v in values)
        return cls("tabulated", eta0, values=values, probs=tuple(float(p) for p in probs))

    @classmethod
    def constant(cls, value: float, eta0: float | None = None) -> "EnvDistribution":
        """Degenerate law; useful as a quenched test input (violates sigma^2 > 0)."""
        return cls.tabulated([value], [1.0], eta0=eta0)

    @property
    def log_ratio(self) -> float:
        """``Lambda = log((1 - eta0) / eta0)``, the largest possible ``|eps|``."""
        return math.log((1.0 - self.eta0) / self.eta0)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.low + (self.high - self.low) * u
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.values, dtype=float)[np.minimum(idx, len(self.values) - 1)]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """i.i.d. draws from an ordinary generator (not counter-based)."""
        return self.quantile(rng.random(size))

    def epsilon_moments(self) -> tuple[float, float]:
        """Exact mean and variance of ``log((1 - alpha_0) / alpha_0)``."""
        if self.kind == "uniform":
            lo, hi = self.low, self.high
            width = hi - lo

            def antider(u):
                return -(1 - u) * math.log(1 - u) - u * math.log(u)

            mean = (antider(hi) - antider(lo)) / width
            m2, _ = integrate.quad(lambda u: math.log((1 - u) / u) ** 2, lo, hi,
                                   epsabs=1e-14, epsrel=1e-13)
            m2 /= width
            return mean, max(m2 - mean * mean, 0.0)
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        eps = np.log((1 - v) / v)
        mean = math.fsum(p * eps)
        var = math.fsum(p * (eps - mean) ** 2)
        return mean, var

    @property
    def sigma(self) -> float:
        return math.sqrt(self.epsilon_moments()[1])

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "eta0": self.eta0}
        if self.kind == "uniform":
            d.update(low=self.low, high=self.high)
        else:
            d.update(values=list(self.values), probs=list(self.probs))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvDistribution":
        d = dict(d)
        kind = d.pop("kind")
        allowed = {"eta0", "values", "probs", "low", "high", "a", "b", "p"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown distribution keys: {sorted(unknown)}")
        if kind == "two_point" and "a" in d:
            return cls.two_point(d["a"], d.get("b"), d.get("p", 0.5), d.get("eta0"))
        if kind == "uniform":
            return cls.uniform(d.get("low", 0.3), d.get("high"), d.get("eta0"))
        if kind in ("two_point", "tabulated"):
            values, probs = d["values"], d["probs"]
            eta0 = d.get("eta0")
            if kind == "two_point":
                if eta0 is None:
                    eta0 = min(min(v, 1 - v) for v in values)
                return cls("two_point", eta0, values=tuple(values), probs=tuple(probs))
            return cls.tabulated(values, probs, eta0)
        raise ValueError(f"unknown distribution kind {kind!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def check_hypotheses(dist: EnvDistribution, tolerance: float = 1e-12) -> dict:
    """Evaluate the three standing hypotheses on the law of ``alpha_0``.

    Returns a report with the exact mean and variance of ``eps_0`` and one
    boolean flag per hypothesis; a failing hypothesis is not an error.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    mean, var = dist.epsilon_moments()
    if dist.kind == "uniform":
        support = (dist.low, dist.high)
    else:
        support = tuple(v for v, p in zip(dist.values, dist.probs) if p > 0)
    eta0_ok = all(dist.eta0 <= v <= 1 - dist.eta0 for v in support)
    return {
        "mean": mean,
        "variance": var,
        "mean_zero": abs(mean) <= tolerance,
        "variance_positive": var > tolerance,
        "eta0_ok": eta0_ok,
    }


class Environment:
    """Lazily realized two-sided environment.

    ``Environment(dist, seed)`` draws ``alpha_i`` from ``dist`` with a
    counter-based generator keyed by ``(seed, i)``.  ``Environment.from_array``
    wraps explicit values on a fixed window (quenched test inputs); such an
    environment raises :class:`WindowError` outside its window.
    """

    def __init__(self, dist: EnvDistribution, seed: int, window: tuple[int, int] = (-64, 64)):
        self.dist = dist
        self.seed = int(seed)
        self._fixed = False
        self._lock = threading.Lock()
        self._lo = 0
        self._alpha = np.empty(0)
        self._cum = np.empty(0)
        self.ensure(*window)

    @classmethod
    def from_array(cls, alpha: Sequence[float], lo: int = 0, eta0: float | None = None) -> "Environment":
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0:
            raise ValueError("alpha must be a non-empty 1-d sequence")
        if np.any(alpha <= 0) or np.any(alpha >= 1):
            raise ValueError("alpha values must lie in (0, 1)")
        if not lo <= 0 <= lo + alpha.size - 1:
            raise ValueError("the window must contain site 0")
        if eta0 is None:
            eta0 = float(np.min(np.minimum(alpha, 1 - alpha)))
            eta0 = min(eta0, 0.5 - 1e-12)
        values, counts = np.unique(alpha, return_counts=True)
        dist = EnvDistribution.tabulated(values, counts / counts.sum(), eta0=eta0)
        env = cls.__new__(cls)
        env.dist = dist
        env.seed = 0
        env._fixed = True
        env._lock = threading.Lock()
        env._lo = int(lo)
        env._alpha = alpha.copy()
        env._cum = None
        env._rebuild_cum()
        return env

    @property
    def window(self) -> tuple[int, int]:
        return self._lo, self._lo + len(self._alpha) - 1

    @property
    def eta0(self) -> float:
        return self.dist.eta0

    @property
    def extendable(self) -> bool:
        return not self._fixed

    def _rebuild_cum(self):
        eps = np.log((1.0 - self._alpha) / self._alpha)
        # _cum[j] = sum of eps over sites lo .. lo+j-1, so S_k = _cum[k-lo+1] - _cum[1-lo]
        self._eps = eps
        self._cum = np.concatenate(([0.0], np.cumsum(eps)))

    def ensure(self, lo: int, hi: int) -> None:
        """Realize every site in ``[lo, hi]`` (and keep site 0 realized)."""
        lo, hi = min(int(lo), 0), max(int(hi), 0)
        cur_lo, cur_hi = self.window if len(self._alpha) else (1, 0)
        if len(self._alpha) and lo >= cur_lo and hi <= cur_hi:
            return
        if self._fixed:
            raise WindowError(f"sites [{lo}, {hi}] outside fixed window {self.window}")
        with self._lock:
            if len(self._alpha):
                lo, hi = min(lo, cur_lo), max(hi, cur_hi)
            sites = np.arange(lo, hi + 1, dtype=np.int64)
            self._alpha = self.dist.quantile(site_uniforms(self.seed, sites))
            self._lo = lo
            self._rebuild_cum()

    def _grow_for(self, lo: int, hi: int):
        if self._fixed:
            self.ensure(lo, hi)
            return
        w_lo, w_hi = self.window
        if lo < w_lo or hi > w_hi:
            span = max(w_hi - w_lo, 64)
            self.ensure(min(lo, w_lo - span) if lo < w_lo else w_lo,
                        max(hi, w_hi + span) if hi > w_hi else w_hi)

    def alpha(self, i: int) -> float:
        self._grow_for(i, i)
        return float(self._alpha[i - self._lo])

    def alpha_range(self, lo: int, hi: int) -> np.ndarray:
        self._grow_for(lo, hi)
        return self._alpha[lo - self._lo: hi - self._lo + 1]

    def epsilon_range(self, lo: int, hi: int) -> np.ndarray:
        self._grow_for(lo, hi)
        return self._eps[lo - self._lo: hi - self._lo + 1]

    def potential_values(self, lo: int, hi: int) -> np.ndarray:
        """``S_k`` for ``k`` in ``[lo, hi]``."""
        self._grow_for(lo, hi)
        base = self._cum[-self._lo + 1] if self._lo <= 0 else None
        if base is None:
            raise WindowError("site 0 is not realized")
        return self._cum[lo - self._lo + 1: hi - self._lo + 2] - base

    def __repr__(self):
        return f"Environment(kind={self.dist.kind!r}, seed={self.seed}, window={self.window})"


def sample_environment(dist: EnvDistribution, seed: int,
                       initial_window: tuple[int, int] = (-64, 64)) -> Environment:
    lo, hi = initial_window
    if not lo <= 0 <= hi:
        raise ValueError("initial window must contain site 0")
    return Environment(dist, seed, (lo, hi))


def epsilon_at(env: Environment, i: int) -> float:
    a = env.alpha(i)
    return math.log((1.0 - a) / a)


@dataclass
class Potential:
    """Values of ``S`` on a contiguous window of sites.

    Built from an environment (and then extendable) or from explicit values.
    """

    lo: int
    values: np.ndarray
    env: Environment | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @classmethod
    def from_values(cls, values: Sequence[float], lo: int = 0) -> "Potential":
        return cls(int(lo), np.asarray(values, dtype=float))

    @classmethod
    def from_environment(cls, env: Environment, lo: int, hi: int) -> "Potential":
        return cls(int(lo), env.potential_values(lo, hi).copy(), env)

    @property
    def hi(self) -> int:
        return self.lo + len(self.values) - 1

    @property
    def extendable(self) -> bool:
        return self.env is not None and self.env.extendable

    def __getitem__(self, k: int) -> float:
        if not self.lo <= k <= self.hi:
            self.extend(k, k)
        return float(self.values[k - self.lo])

    def segment(self, lo: int, hi: int) -> np.ndarray:
        if lo < self.lo or hi > self.hi:
            self.extend(lo, hi)
        return self.values[lo - self.lo: hi - self.lo + 1]

    def extend(self, lo: int, hi: int) -> None:
        lo, hi = min(lo, self.lo), max(hi, self.hi)
        if lo == self.lo and hi == self.hi:
            return
        if self.env is None:
            raise WindowError(f"sites [{lo}, {hi}] outside potential window [{self.lo}, {self.hi}]")
        self.values = self.env.potential_values(lo, hi).copy()
        self.lo = lo


def potential_range(env: Environment, lo: int, hi: int) -> Potential:
    return Potential.from_environment(env, lo, hi)
