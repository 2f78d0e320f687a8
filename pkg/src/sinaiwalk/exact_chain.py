"""Closed forms for the quenched birth-death chain and linear-solve oracles.

With weights ``w_j = exp(S_j)`` the first-passage probabilities on
``[a, b]`` are ratios of partial sums of ``w`` over ``[a, b-1]``:

    P_x[T_b < T_a] = sum_{j=a}^{x-1} w_j / sum_{j=a}^{b-1} w_j

Normalised by ``exp(S_a)`` this is the textbook ``(1 + sum_{a<j<x}) /
(1 + sum_{a<j<b})`` form.  The complementary probability printed with
weights normalised by ``exp(S_b)`` sums ``j`` over ``[x+1, b]`` instead of
``[x, b-1]``; under ``S_k - S_{k-1} = eps_k`` that version is off by one
site (see ``tests/test_exact_chain.py``), so the shipped code uses the
complement of the first form.

Sums are taken after subtracting the maximum exponent, so potentials of
several hundred natural-log units do not overflow.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

from .env_model import Environment

__all__ = [
    "expected_local_time",
    "expected_local_times",
    "hit_prob",
    "log_hit_prob",
    "oracle_expected_local_time",
    "oracle_hit_prob",
    "sandwich_bounds",
    "sandwich_holds",
    "wald_bound",
]

ORACLE_MAX_INTERVAL = 10_000
ORACLE_MAX_DISTANCE = 1_000


def _check_interval(a: int, x: int, b: int):
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if not a <= x <= b:
        raise ValueError(f"x={x} outside [{a}, {b}]")


def _split_sums(s: np.ndarray, k: int) -> tuple[float, float]:
    # s holds S_a..S_{b-1}; returns max-shifted sums over s[:k] and s[k:]
    top = s.max()
    w = np.exp(s - top)
    return float(w[:k].sum()), float(w[k:].sum())


def hit_prob(env: Environment, a: int, x: int, b: int, target: str = "above") -> float:
    """Probability, started at ``x``, of reaching ``b`` before ``a``
    (``target="above"``) or ``a`` before ``b`` (``target="below"``)."""
    _check_interval(a, x, b)
    if target not in ("above", "below"):
        raise ValueError("target must be 'above' or 'below'")
    if x == a or x == b:
        reach_b = 1.0 if x == b else 0.0
        return reach_b if target == "above" else 1.0 - reach_b
    s = env.potential_values(a, b - 1)
    up, down = _split_sums(s, x - a)
    total = up + down
    return up / total if target == "above" else down / total


def log_hit_prob(env: Environment, a: int, x: int, b: int, target: str = "above") -> float:
    """Logarithm of :func:`hit_prob`, accurate when the probability underflows."""
    _check_interval(a, x, b)
    if x == a or x == b:
        p = hit_prob(env, a, x, b, target)
        return math.log(p) if p > 0 else -math.inf
    s = env.potential_values(a, b - 1)
    top = s.max()
    w = np.exp(s - top)
    k = x - a
    part = w[:k] if target == "above" else w[k:]
    return math.log(part.sum()) - math.log(w.sum())


def expected_local_time(env: Environment, i: int, x: int) -> float:
    """Mean number of visits to ``x`` during one excursion from ``i``
    (times ``1..T_i``, so the return to ``i`` itself is not counted for ``x != i``)."""
    if x == i:
        raise ValueError("x must differ from the excursion centre i")
    alpha_i, alpha_x = env.alpha(i), env.alpha(x)
    if x > i:
        log_num = math.log(alpha_i) + log_hit_prob(env, i, i + 1, x, "above")
        log_den = math.log(1.0 - alpha_x) + log_hit_prob(env, i, x - 1, x, "below")
    else:
        log_num = math.log(1.0 - alpha_i) + log_hit_prob(env, x, i - 1, i, "below")
        log_den = math.log(alpha_x) + log_hit_prob(env, x, x + 1, i, "above")
    return math.exp(log_num - log_den)


def expected_local_times(env: Environment, i: int, xs) -> np.ndarray:
    """Vectorised :func:`expected_local_time` over sites ``xs`` (all on one
    side of ``i`` or mixed)."""
    xs = np.asarray(xs, dtype=np.int64)
    out = np.empty(xs.shape, dtype=float)
    if xs.size == 0:
        return out
    if np.any(xs == i):
        raise ValueError("x must differ from the excursion centre i")
    lo, hi = int(min(xs.min(), i)), int(max(xs.max(), i))
    s = env.potential_values(lo, hi)
    alpha = env.alpha_range(lo, hi)
    si = s[i - lo]
    right = xs > i
    if right.any():
        # P_{i+1}[T_x < T_i] = w_i / W_x, P_{x-1}[T_i < T_x] = w_{x-1} / W_x,
        # W_x = sum_{j=i}^{x-1} w_j  (log-cumulative sums)
        lse = np.logaddexp.accumulate(s[i - lo: hi - lo])
        xr = xs[right]
        log_w = lse[xr - 1 - i]
        log_p_in = si - log_w
        log_p_back = s[xr - 1 - lo] - log_w
        out[right] = np.exp(np.log(alpha[i - lo]) + log_p_in
                            - np.log1p(-alpha[xr - lo]) - log_p_back)
    left = ~right
    if left.any():
        # sums over j = x..i-1, accumulated leftwards from i-1
        lse = np.logaddexp.accumulate(s[: i - lo][::-1])
        xl = xs[left]
        log_w = lse[i - 1 - xl]
        log_p_in = s[i - 1 - lo] - log_w
        log_p_back = s[xl - lo] - log_w
        out[left] = np.exp(np.log1p(-alpha[i - lo]) + log_p_in
                           - np.log(alpha[xl - lo]) - log_p_back)
    return out


def oracle_hit_prob(env: Environment, a: int, x: int, b: int) -> float:
    """``P_x[T_b < T_a]`` from the tridiagonal system
    ``h_a = 0, h_b = 1, h_i = alpha_i h_{i+1} + (1 - alpha_i) h_{i-1}``."""
    _check_interval(a, x, b)
    if b - a > ORACLE_MAX_INTERVAL:
        raise ValueError(f"interval longer than {ORACLE_MAX_INTERVAL}")
    if x in (a, b):
        return float(x == b)
    alpha = env.alpha_range(a + 1, b - 1)
    n = alpha.size
    # unknowns h_{a+1}..h_{b-1}:  -beta_i h_{i-1} + h_i - alpha_i h_{i+1} = rhs
    ab = np.zeros((3, n))
    ab[0, 1:] = -alpha[:-1]
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - alpha[1:])
    rhs = np.zeros(n)
    rhs[-1] = alpha[-1]
    h = solve_banded((1, 1), ab, rhs)
    return float(h[x - a - 1])


def oracle_expected_local_time(env: Environment, i: int, x: int) -> float:
    """Expected visits to ``x`` before returning to ``i`` by solving the
    occupation system on the sites strictly between ``i`` and ``x`` plus ``x``.

    ``g(y)`` (visits to ``x`` counted from time 0, chain killed at ``i``)
    satisfies ``g(y) = 1{y=x} + alpha_y g(y+1) + beta_y g(y-1)``; beyond
    ``x`` the walk returns to ``x`` almost surely, which closes the system
    at ``x`` with ``g(x) = 1 + p_x g(x) + q_x g(x -/+ 1)``.
    """
    if x == i:
        raise ValueError("x must differ from the excursion centre i")
    if abs(x - i) > ORACLE_MAX_DISTANCE:
        raise ValueError(f"|x - i| larger than {ORACLE_MAX_DISTANCE}")
    if x > i:
        alpha = env.alpha_range(i + 1, x)
        up, down = alpha, 1.0 - alpha
        first_step = env.alpha(i)
    else:
        # reflect so that x sits to the right of i
        alpha = env.alpha_range(x, i - 1)[::-1]
        up, down = 1.0 - alpha, alpha
        first_step = 1.0 - env.alpha(i)
    n = up.size
    # unknowns g_1..g_n for the sites i+1..x (reflected); g_0 = 0 at the centre
    ab = np.zeros((3, n))
    ab[1, :] = 1.0
    ab[0, 1:] = -up[:-1]
    ab[2, :-1] = -down[1:]
    # last row: g_n - up_n g_n - down_n g_{n-1} = 1
    ab[1, -1] = 1.0 - up[-1]
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    g = solve_banded((1, 1), ab, rhs)
    return float(first_step * g[0])


def sandwich_bounds(env: Environment, m: int, k: int,
                    eta0: float | None = None) -> tuple[float, float, float]:
    """``(lower, value, upper)`` with ``value = E_m[L(k, T_m)]`` and bounds
    ``eta0/(1-eta0) e^{-(S_k-S_m)}`` and ``e^{-(S_k-S_m)}/eta0``."""
    if k == m:
        raise ValueError("k must differ from m")
    eta0 = env.eta0 if eta0 is None else eta0
    lo, hi = min(m, k), max(m, k)
    s = env.potential_values(lo, hi)
    base = math.exp(-(s[k - lo] - s[m - lo]))
    value = expected_local_time(env, m, k)
    return eta0 / (1.0 - eta0) * base, value, base / eta0


def sandwich_holds(lower: float, value: float, upper: float, rtol: float = 1e-12) -> bool:
    """``lower <= value <= upper`` up to rounding; two-point laws attain the
    lower bound exactly, so the comparison needs a relative slack."""
    return lower <= value * (1.0 + rtol) and value <= upper * (1.0 + rtol)


def wald_bound(a: float, d: float, eta0: float) -> tuple[float, float]:
    """Upper bounds on ``Q[V^-_a < V^+_d]`` and ``Q[V^-_a > V^+_d]``."""
    if a <= 0 or d <= 0:
        raise ValueError("a and d must be positive")
    if not 0.0 < eta0 < 0.5:
        raise ValueError("eta0 must lie in (0, 1/2)")
    lam = math.log((1.0 - eta0) / eta0)
    return (d + lam) / (d + a + lam), (a + lam) / (d + a + lam)
