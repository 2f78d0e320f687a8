"""Quenched simulation of the walk and local-time bookkeeping.

From site ``i`` the walk steps to ``i + 1`` with probability ``alpha_i``
and to ``i - 1`` otherwise.  A step consumes one uniform ``u`` and goes up
iff ``u < alpha_i``.  Local times count the positions ``X_1, ..., X_n``;
the starting position at time 0 is not counted.

Walk randomness comes from its own stream, independent of the environment
seed, so one environment can be reused for many walks.  Any object with a
``random(size)`` method can stand in for the stream (forced paths in tests).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .env_model import Environment, WindowError

__all__ = [
    "ConcentrationStats",
    "ExcursionEstimate",
    "LocalTimeField",
    "WalkState",
    "Walker",
    "concentration_radius",
    "excursion_local_time",
    "hitting_time",
    "make_stream",
    "run",
    "stats",
]

CHUNK = 1 << 16
_NO_TARGET = np.iinfo(np.int64).min


def make_stream(walk_seed):
    """Generator for a walk seed; objects exposing ``random`` pass through."""
    if hasattr(walk_seed, "random"):
        return walk_seed
    if isinstance(walk_seed, np.random.SeedSequence):
        return np.random.default_rng(walk_seed)
    return np.random.default_rng(np.random.SeedSequence(int(walk_seed)))


@numba.njit(cache=True)
def _walk_kernel(alpha, lo, pos, u, u_start, max_steps, counts, target):
    # steps until max_steps, the uniforms run out, the target is hit or the
    # walk stands on the first or last realized site
    last = alpha.size - 1
    k = u_start
    steps = 0
    hit = False
    while steps < max_steps and k < u.size:
        i = pos - lo
        if i <= 0 or i >= last:
            break
        if u[k] < alpha[i]:
            pos += 1
        else:
            pos -= 1
        k += 1
        steps += 1
        counts[pos - lo] += 1
        if pos == target:
            hit = True
            break
    return pos, k, steps, hit


@numba.njit(cache=True)
def _excursion_kernel(alpha, lo, hull_lo, hull_hi, center, mask, pos, u, u_start,
                      wanted, done, acc, sums, sq):
    # excursions from center; outside [hull_lo, hull_hi] nothing is counted and
    # the walk comes back to the hull edge, so those detours are skipped
    k = u_start
    while done < wanted and k < u.size:
        i = pos - lo
        if u[k] < alpha[i]:
            nxt = pos + 1
        else:
            nxt = pos - 1
        k += 1
        if nxt < hull_lo or nxt > hull_hi:
            nxt = pos
        pos = nxt
        if mask[pos - hull_lo]:
            acc += 1.0
        if pos == center:
            sums += acc
            sq += acc * acc
            acc = 0.0
            done += 1
    return pos, k, done, acc, sums, sq


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Occupation counts on ``[lo, lo + len(counts) - 1]`` (the visited range)."""

    lo: int
    counts: np.ndarray
    total: int

    @classmethod
    def from_path(cls, path) -> "LocalTimeField":
        """Counts of an explicit path ``X_1, ..., X_n``."""
        path = np.asarray(path, dtype=np.int64)
        if path.size == 0:
            raise ValueError("path must contain at least one step")
        lo = int(path.min())
        counts = np.bincount(path - lo).astype(np.int64)
        return cls(lo, counts, int(path.size))

    @property
    def min_site(self) -> int:
        return self.lo

    @property
    def max_site(self) -> int:
        return self.lo + self.counts.size - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.max_site + 1)

    def __getitem__(self, site: int) -> int:
        i = site - self.lo
        return int(self.counts[i]) if 0 <= i < self.counts.size else 0

    def mass(self, lo: int, hi: int) -> int:
        """Local time of the site interval ``[lo, hi]``."""
        a, b = max(lo - self.lo, 0), min(hi - self.lo, self.counts.size - 1)
        return int(self.counts[a: b + 1].sum()) if a <= b else 0

    def as_dict(self) -> dict[int, int]:
        nz = np.flatnonzero(self.counts)
        return {int(i + self.lo): int(self.counts[i]) for i in nz}

    def __eq__(self, other):
        return (isinstance(other, LocalTimeField) and self.lo == other.lo
                and self.total == other.total and np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash((self.lo, self.total, self.counts.tobytes()))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.lo).tobytes())
        h.update(np.int64(self.total).tobytes())
        h.update(np.ascontiguousarray(self.counts, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass
class WalkState:
    env: Environment
    position: int
    step_count: int
    stream: object = field(repr=False)


class Walker:
    """Stateful walk that can be advanced in stages (checkpointed runs)."""

    def __init__(self, env: Environment, walk_seed, start: int = 0):
        self.env = env
        self.stream = make_stream(walk_seed)
        self.position = int(start)
        self.step_count = 0
        lo, hi = env.window
        if not lo < start < hi:
            env.ensure(start - 64, start + 64)
        self._sync()
        self._counts = np.zeros(self._alpha.size, dtype=np.int64)
        self._buf = np.empty(0)
        self._k = 0

    def _sync(self):
        self._lo, hi = self.env.window
        self._alpha = self.env.alpha_range(self._lo, hi)

    def _grow(self):
        old_lo, old = self._lo, self._counts
        lo, hi = self.env.window
        span = max(hi - lo, 64)
        if self.position - lo <= 0:
            lo -= span
        if hi - self.position <= 0:
            hi += span
        self.env.ensure(lo, hi)
        self._sync()
        self._counts = np.zeros(self._alpha.size, dtype=np.int64)
        off = old_lo - self._lo
        self._counts[off: off + old.size] = old

    def _uniforms(self):
        if self._k >= self._buf.size:
            self._buf = np.asarray(self.stream.random(CHUNK), dtype=float)
            self._k = 0
        return self._buf

    def advance(self, n_steps: int, target: int | None = None) -> bool:
        """Take up to ``n_steps`` steps; stop early on reaching ``target``.

        Returns True iff the target was hit.
        """
        tgt = _NO_TARGET if target is None else int(target)
        left = int(n_steps)
        while left > 0:
            i = self.position - self._lo
            if i <= 0 or i >= self._alpha.size - 1:
                if not self.env.extendable:
                    raise WindowError(f"walk reached the edge of the fixed window at {self.position}")
                self._grow()
                continue
            u = self._uniforms()
            pos, k, steps, hit = _walk_kernel(self._alpha, self._lo, self.position, u,
                                              self._k, left, self._counts, tgt)
            self.position, self._k = int(pos), int(k)
            self.step_count += int(steps)
            left -= int(steps)
            if hit:
                return True
        return False

    def field(self) -> LocalTimeField:
        nz = np.flatnonzero(self._counts)
        if nz.size == 0:
            return LocalTimeField(self.position, np.zeros(1, dtype=np.int64), 0)
        return LocalTimeField(int(nz[0]) + self._lo, self._counts[nz[0]: nz[-1] + 1].copy(),
                              self.step_count)

    def state(self) -> WalkState:
        return WalkState(self.env, self.position, self.step_count, self.stream)


def run(env: Environment, walk_seed, n_steps: int, start: int = 0) -> tuple[LocalTimeField, WalkState]:
    """Run ``n_steps`` steps from ``start``; the environment window grows as needed."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    w = Walker(env, walk_seed, start)
    w.advance(n_steps)
    return w.field(), w.state()


def hitting_time(env: Environment, walk_seed, x: int, cap: int, start: int = 0) -> int | None:
    """First ``k >= 1`` with ``X_k = x``, or None if not reached within ``cap`` steps."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    w = Walker(env, walk_seed, start)
    return w.step_count if w.advance(cap, target=x) else None


@dataclass(frozen=True)
class ExcursionEstimate:
    mean: float
    stderr: float
    excursions: int
    complete: bool


def excursion_local_time(env: Environment, walk_seed, center: int, target_set,
                         excursions: int, max_uniforms: int | None = None) -> ExcursionEstimate:
    """Mean local time of ``target_set`` per excursion from ``center``.

    Each excursion runs from time 0 at ``center`` to the first return; the
    return step itself counts when ``center`` is a target.  Excursions leaving
    the hull of ``center`` and the targets are cut at the hull edge, which is
    exact for a recurrent walk.  ``max_uniforms`` caps the random numbers
    used; running out is reported through ``complete``.
    """
    if excursions < 1:
        raise ValueError("excursions must be at least 1")
    targets = np.unique(np.asarray(list(target_set), dtype=np.int64))
    if targets.size == 0:
        raise ValueError("target_set must be non-empty")
    hull_lo = int(min(targets.min(), center))
    hull_hi = int(max(targets.max(), center))
    alpha = env.alpha_range(hull_lo, hull_hi).copy()
    mask = np.zeros(hull_hi - hull_lo + 1, dtype=np.bool_)
    mask[targets - hull_lo] = True
    stream = make_stream(walk_seed)
    pos, done, acc, sums, sq, used = int(center), 0, 0.0, 0.0, 0.0, 0
    while done < excursions:
        if max_uniforms is not None and used >= max_uniforms:
            break
        size = CHUNK if max_uniforms is None else min(CHUNK, max_uniforms - used)
        u = np.asarray(stream.random(size), dtype=float)
        pos, k, done, acc, sums, sq = _excursion_kernel(
            alpha, hull_lo, hull_lo, hull_hi, center, mask, pos, u, 0,
            excursions, done, acc, sums, sq)
        used += int(k)
    if done == 0:
        return ExcursionEstimate(math.nan, math.nan, 0, False)
    mean = sums / done
    var = max(sq / done - mean * mean, 0.0) * done / (done - 1) if done > 1 else math.nan
    return ExcursionEstimate(mean, math.sqrt(var / done), done, done == excursions)


def _window_masses(prefix: np.ndarray, k: int) -> np.ndarray:
    # mass of [x - k, x + k] for every visited x; prefix[j] = counts[:j].sum()
    span = prefix.size - 1
    x = np.arange(span)
    return prefix[np.minimum(x + k + 1, span)] - prefix[np.maximum(x - k, 0)]


def concentration_radius(field: LocalTimeField, beta: float, return_center: bool = False):
    """Smallest ``k >= 1`` such that some ``[x - k, x + k]`` carries at least
    ``beta * total`` of the local time.

    Only centres inside the visited range need checking, and the best mass
    is nondecreasing in ``k``, so ``k`` is found by bisection.  With
    ``return_center`` the leftmost optimal centre is returned too.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if field.total < 1:
        raise ValueError("field is empty")
    need = beta * field.total
    prefix = np.concatenate(([0], np.cumsum(field.counts)))
    # radius equal to the range length covers everything
    lo, hi = 1, max(field.counts.size, 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if _window_masses(prefix, mid).max() >= need:
            hi = mid
        else:
            lo = mid + 1
    if not return_center:
        return lo
    masses = _window_masses(prefix, lo)
    return lo, int(np.flatnonzero(masses >= need)[0]) + field.lo


@dataclass
class ConcentrationStats:
    l_star: int
    favorites: np.ndarray
    fav_spread: int
    field: LocalTimeField = field(repr=False)

    def y_radius(self, beta: float) -> int:
        return _cached_radius(self.field, float(beta))


@lru_cache(maxsize=256)
def _cached_radius(fld: LocalTimeField, beta: float) -> int:
    return concentration_radius(fld, beta)


def stats(field: LocalTimeField) -> ConcentrationStats:
    """Maximal local time, favourite sites and their spread."""
    if field.total < 1:
        raise ValueError("field is empty")
    l_star = int(field.counts.max())
    fav = np.flatnonzero(field.counts == l_star) + field.lo
    return ConcentrationStats(l_star, fav, int(fav[-1] - fav[0]), field)
