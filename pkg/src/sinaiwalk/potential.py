"""Valleys of the random potential and the stopping times built on it.

Sites are integers; a :class:`~sinaiwalk.env_model.Potential` supplies
``S_k``.  Comparisons that decide ties (argmin/argmax, equal drops) use an
absolute tolerance ``TIE_TOL`` because lattice potentials reached along
different paths differ in the last bits.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .env_model import Environment, Potential

__all__ = [
    "BasicValley",
    "GoodEnvParams",
    "Refinement",
    "SliceBound",
    "Valley",
    "band_counts",
    "band_entry_times",
    "basic_valley",
    "TIE_TOL",
    "find_basic_valley",
    "flank_sites",
    "gamma_n",
    "is_good_environment",
    "is_valley",
    "ladder_epochs",
    "log_log_margin",
    "make_valley",
    "off_core_expectation",
    "refine_left",
    "refine_right",
    "satisfies_depth_condition",
    "slice_upper_bound",
    "stopping_time_down",
    "stopping_time_up",
    "window_bound",
]

TIE_TOL = 1e-9
SUM_RTOL = 1e-12


class Valley(NamedTuple):
    m_left: int
    bottom: int
    m_right: int
    depth: float


class Refinement(NamedTuple):
    """Result of a refinement: the deepest sub-drop ``peak -> trough``."""

    peak: int
    trough: int
    drop: float


@dataclass(frozen=True)
class BasicValley:
    m_prime: int
    m_n: int
    m_right: int
    gamma: float
    margin: float
    depth: float

    def to_record(self) -> dict:
        return asdict(self)


def gamma_n(n: int) -> float:
    """Depth threshold ``log n + 12 log log n``; requires ``n >= 16``."""
    if n < 16:
        raise ValueError(f"n must be at least 16, got {n}")
    return math.log(n) + 12.0 * math.log(math.log(n))


def log_log_margin(n: int) -> float:
    if n < 16:
        raise ValueError(f"n must be at least 16, got {n}")
    return 12.0 * math.log(math.log(n))


def window_bound(n: int, sigma: float) -> int:
    """``ceil((log n / sigma)^2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return max(1, math.ceil((math.log(n) / sigma) ** 2))


def _pick(sites: np.ndarray) -> int:
    # smallest absolute value, then smaller site
    sites = np.asarray(sites)
    best = np.abs(sites).min()
    return int(sites[np.abs(sites) == best].min())


def _argmin_site(pot: Potential, lo: int, hi: int) -> int:
    s = pot.segment(lo, hi)
    cand = np.flatnonzero(s <= s.min() + TIE_TOL) + lo
    return _pick(cand)


def is_valley(pot: Potential, m_left: int, bottom: int, m_right: int) -> bool:
    if not m_left <= bottom <= m_right:
        return False
    s = pot.segment(m_left, m_right)
    sl, sb, sr = s[0], s[bottom - m_left], s[-1]
    return (sl >= s[: bottom - m_left + 1].max() - TIE_TOL
            and sr >= s[bottom - m_left:].max() - TIE_TOL
            and sb <= s.min() + TIE_TOL)


def make_valley(pot: Potential, m_left: int, bottom: int, m_right: int) -> Valley:
    sb = pot[bottom]
    return Valley(m_left, bottom, m_right, min(pot[m_left] - sb, pot[m_right] - sb))


def refine_right(pot: Potential, valley: Valley) -> Refinement:
    """Deepest drop ``S[peak] - S[trough]`` with ``bottom <= peak <= trough <= m_right``.

    Among maximizers the trough with the smallest ``|site|`` wins, then the
    peak with the smallest ``|site|``; equal magnitudes resolve to the
    smaller site.
    """
    m, r = valley.bottom, valley.m_right
    if r < m:
        raise ValueError("malformed valley")
    s = pot.segment(m, r)
    gaps = np.maximum.accumulate(s) - s
    drop = float(gaps.max())
    trough = _pick(np.flatnonzero(gaps >= drop - TIE_TOL) + m)
    head = s[: trough - m + 1]
    peak = _pick(np.flatnonzero(head - s[trough - m] >= drop - TIE_TOL) + m)
    return Refinement(peak, trough, float(pot[peak] - pot[trough]))


def refine_left(pot: Potential, valley: Valley) -> Refinement:
    """Mirror of :func:`refine_right` on ``[m_left, bottom]``: deepest rise
    ``S[peak] - S[trough]`` with ``m_left <= trough <= peak <= bottom``."""
    lft, m = valley.m_left, valley.bottom
    if m < lft:
        raise ValueError("malformed valley")
    s = pot.segment(lft, m)
    gaps = np.maximum.accumulate(s[::-1])[::-1] - s
    drop = float(gaps.max())
    trough = _pick(np.flatnonzero(gaps >= drop - TIE_TOL) + lft)
    tail = s[trough - lft:]
    peak = _pick(np.flatnonzero(tail - s[trough - lft] >= drop - TIE_TOL) + trough)
    return Refinement(peak, trough, float(pot[peak] - pot[trough]))


def satisfies_depth_condition(pot: Potential, v: Valley, gamma: float, margin: float) -> bool:
    """Containment of 0, depth >= gamma, and the side condition with ``margin``."""
    if not v.m_left <= 0 <= v.m_right:
        return False
    if v.depth < gamma:
        return False
    if v.bottom < 0:
        return pot[v.m_right] - pot.segment(v.bottom, 0).max() >= margin
    if v.bottom > 0:
        return pot[v.m_left] - pot.segment(0, v.bottom).max() >= margin
    return True


def _outer_walls(pot: Potential, m: int, gamma: float, margin: float,
                 lo: int, hi: int) -> tuple[int, int] | None:
    s = pot.segment(lo, hi)
    sm = s[m - lo]
    sites = np.arange(lo, hi + 1)
    left_ok = (sites < m) & (sites <= 0) & (s - sm >= gamma)
    right_ok = (sites > m) & (sites >= 0) & (s - sm >= gamma)
    if m > 0:
        left_ok &= s - pot.segment(0, m).max() >= margin
    elif m < 0:
        right_ok &= s - pot.segment(m, 0).max() >= margin
    if not left_ok.any() or not right_ok.any():
        return None
    return int(sites[left_ok].max()), int(sites[right_ok].min())


class _RangeMax:
    """Sparse table for O(1) range maxima on a fixed array."""

    def __init__(self, values: np.ndarray):
        self.table = [np.asarray(values, dtype=float)]
        span = 1
        while 2 * span <= len(values):
            prev = self.table[-1]
            self.table.append(np.maximum(prev[:-span], prev[span:]))
            span *= 2

    def __call__(self, i: int, j: int) -> float:
        k = (j - i + 1).bit_length() - 1
        row = self.table[k]
        return float(max(row[i], row[j - (1 << k) + 1]))


def basic_valley(pot: Potential, gamma: float, margin: float,
                 window: tuple[int, int] | None = None) -> BasicValley | None:
    """Basic valley of depth ``gamma`` around 0 inside a fixed window.

    Valleys containing 0 are indexed by the level of their bottom: the
    bottom ``m`` is a weak running minimum seen from 0 and the valley lives
    in the connected set ``{S >= S_m}`` around 0, with walls at its maxima
    on each side of ``m``.  These sets are nested, so the smallest valley
    meeting the depth and side conditions belongs to the admissible bottom
    of highest level.  Its outer walls are then the nearest sites rising
    ``gamma`` above ``S[m_n]``, the wall on the far side of 0 also clearing
    ``margin`` above the highest point between ``m_n`` and 0.

    Returns None when the window does not determine such a valley.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    lo, hi = (pot.lo, pot.hi) if window is None else window
    if not lo <= 0 <= hi:
        raise ValueError("window must contain 0")
    s = pot.segment(lo, hi)
    z = -lo
    run_right = np.minimum.accumulate(s[z:])
    run_left = np.minimum.accumulate(s[z::-1])
    cand = np.concatenate((np.flatnonzero(s[z:] <= run_right + TIE_TOL) + z,
                           z - np.flatnonzero(s[z::-1] <= run_left + TIE_TOL)))
    cand = np.unique(cand)
    cand = cand[np.argsort(-s[cand], kind="stable")]
    levels = s[cand]
    # a new group starts wherever the level drops by more than the tie tolerance
    starts = np.flatnonzero(np.concatenate(([True], np.diff(-levels) > TIE_TOL)))
    groups = np.split(cand, starts[1:])
    rmax = _RangeMax(s)
    neg_right, neg_left = -run_right, -run_left
    for group in groups:
        level = s[group].max() - TIE_TOL
        # running minima are nonincreasing: the set {S >= level} around 0
        # ends just before they first drop below the level
        jr = int(np.searchsorted(neg_right, -level, side="right"))
        jl = int(np.searchsorted(neg_left, -level, side="right"))
        cut_left, cut_right = jl >= neg_left.size, jr >= neg_right.size
        a, b = z - jl + 1, z + jr - 1
        m = _pick(group + lo) - lo
        sm = s[m]
        lwall = rmax(a, m)
        rwall = rmax(m, b)
        # a check failing on a side the window cuts short may pass on a
        # wider window; a failure on a closed side is final
        fails = []
        if lwall - sm < gamma:
            fails.append(cut_left)
        if rwall - sm < gamma:
            fails.append(cut_right)
        if not fails:
            wl = a + int(np.flatnonzero(s[a: m + 1] >= lwall - TIE_TOL)[0])
            wr = m + int(np.flatnonzero(s[m: b + 1] >= rwall - TIE_TOL)[-1])
            if wl > z:
                fails.append(cut_left)
            if wr < z:
                fails.append(cut_right)
            if m < z and rwall - rmax(m, z) < margin:
                fails.append(cut_right)
            if m > z and lwall - rmax(z, m) < margin:
                fails.append(cut_left)
        if fails:
            if all(fails):
                return None
            continue
        walls = _outer_walls(pot, m + lo, gamma, margin, lo, hi)
        if walls is None:
            return None
        left, right = walls
        depth = min(pot[left] - sm, pot[right] - sm)
        return BasicValley(left, m + lo, right, float(gamma), float(margin), float(depth))
    return None


def find_basic_valley(env: Environment | Potential, n: int, sigma: float | None = None,
                      margin: float | None = None, gamma: float | None = None,
                      window_factor: float = 64.0) -> BasicValley | None:
    """Basic valley for time ``n``.

    The search window starts at ``[-W, W]`` with ``W = ceil((log n / sigma)^2)``
    and doubles until a valley is found or the half-width reaches
    ``window_factor * (gamma / sigma)^2``, the scale on which a potential
    first rises by ``gamma``.
    """
    if isinstance(env, Potential):
        pot = env
        if sigma is None:
            if pot.env is None:
                raise ValueError("sigma is required for a bare potential")
            sigma = pot.env.dist.sigma
    else:
        sigma = env.dist.sigma if sigma is None else sigma
        pot = None
    gamma = gamma_n(n) if gamma is None else gamma
    margin = log_log_margin(n) if margin is None else margin
    if window_factor <= 0:
        raise ValueError("window_factor must be positive")
    w = window_bound(n, sigma)
    cap = max(w, math.ceil(window_factor * (gamma / sigma) ** 2))
    if pot is None:
        if not env.extendable:
            cap = min(cap, -env.window[0], env.window[1])
        pot = Potential.from_environment(env, -min(w, cap), min(w, cap))
    elif not pot.extendable:
        cap = min(cap, -pot.lo, pot.hi)
    width = min(w, cap)
    while True:
        bv = basic_valley(pot, gamma, margin, (-width, width))
        if bv is not None or width >= cap:
            return bv
        width = min(2 * width, cap)


# -- stopping times on the right half-line --------------------------------

def _scan(pot: Potential, start: int, cap: int | None) -> np.ndarray:
    if cap is not None and cap <= 0:
        raise ValueError("cap must be positive")
    end = start + cap if cap is not None else pot.hi
    if end > pot.hi and not pot.extendable:
        end = pot.hi
    return pot.segment(start, end) - pot[start]


def stopping_time_up(pot: Potential, a: float, start: int = 0, cap: int | None = None) -> int | None:
    """First ``m >= 1`` with ``S[start+m] - S[start] >= a``; None if not within ``cap``."""
    if a <= 0:
        raise ValueError("a must be positive")
    rel = _scan(pot, start, cap)
    hits = np.flatnonzero(rel[1:] >= a)
    return int(hits[0]) + 1 if hits.size else None


def stopping_time_down(pot: Potential, a: float, start: int = 0, cap: int | None = None) -> int | None:
    """First ``m >= 1`` with ``S[start+m] - S[start] <= -a``."""
    if a <= 0:
        raise ValueError("a must be positive")
    rel = _scan(pot, start, cap)
    hits = np.flatnonzero(rel[1:] <= -a)
    return int(hits[0]) + 1 if hits.size else None


def ladder_epochs(pot: Potential, count: int, start: int = 0,
                  cap: int | None = None) -> tuple[list[int], bool]:
    """Strict descending ladder epochs ``u_1 < u_2 < ...`` (offsets from ``start``).

    Returns the epochs found and whether ``count`` of them were reached
    before the scan ran out.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rel = _scan(pot, start, cap)
    # new strict minimum: below every earlier value including S[start]
    prev_min = np.minimum.accumulate(rel)[:-1]
    is_record = rel[1:] < prev_min - TIE_TOL
    epochs = (np.flatnonzero(is_record) + 1)[:count].tolist()
    return epochs, len(epochs) == count


def band_entry_times(pot: Potential, band_index: int, band_width: float, count: int,
                     start: int = 0, cap: int | None = None) -> tuple[list[int], bool]:
    """Successive times ``m > 0`` with ``S[start+m] - S[start]`` in
    ``[(i-1)a, ia)``; returns the times and whether ``count`` were found."""
    if band_index < 1 or band_width <= 0:
        raise ValueError("band index must be >= 1 and width positive")
    if count < 1:
        raise ValueError("count must be at least 1")
    rel = _scan(pot, start, cap)[1:]
    lo_edge = (band_index - 1) * band_width
    inside = (rel >= lo_edge) & (rel < band_index * band_width)
    times = (np.flatnonzero(inside) + 1)[:count].tolist()
    return times, len(times) == count


# -- flank sums ------------------------------------------------------------

def flank_sites(valley: BasicValley, c_tilde: float) -> tuple[np.ndarray, np.ndarray]:
    """Sites of ``[m_n + c~, M_n]`` and ``[M'_n, m_n - c~]``."""
    right = np.arange(math.ceil(valley.m_n + c_tilde), valley.m_right + 1)
    left = np.arange(valley.m_prime, math.floor(valley.m_n - c_tilde) + 1)
    return right, left


def _heights(pot: Potential, valley: BasicValley, sites: np.ndarray) -> np.ndarray:
    if sites.size == 0:
        return np.empty(0)
    h = pot.segment(int(sites[0]), int(sites[-1])) - pot[valley.m_n]
    # the bottom is a minimum; rounding noise below zero is snapped
    return np.where((h < 0) & (h > -TIE_TOL), 0.0, h)


def band_counts(pot: Potential, valley: BasicValley, c_tilde: float, a: float,
                n_bands: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts of flank sites with ``S_j - S_{m_n}`` in ``[a(i-1), ai)``, ``i = 1..n_bands``."""
    out = []
    for sites in flank_sites(valley, c_tilde):
        h = _heights(pot, valley, sites)
        idx = np.floor(h / a).astype(np.int64)
        idx = idx[(idx >= 0) & (idx < n_bands)]
        out.append(np.bincount(idx, minlength=n_bands))
    return out[0], out[1]


@dataclass(frozen=True)
class SliceBound:
    """Both sides of the banded bound per flank.

    ``*_excess`` is the part of the sum carried by sites above the top band;
    those sites have no band term on the right-hand side.
    """

    right_sum: float
    right_bound: float
    left_sum: float
    left_bound: float
    right_excess: float = 0.0
    left_excess: float = 0.0

    @property
    def holds(self) -> bool:
        # the two sides agree term by term on lattice laws, so compare up to rounding
        return (self.right_sum <= self.right_bound * (1.0 + SUM_RTOL)
                and self.left_sum <= self.left_bound * (1.0 + SUM_RTOL))


def slice_upper_bound(pot: Potential, valley: BasicValley, c_tilde: float, a: float,
                      log_ratio: float | None = None) -> SliceBound:
    """Both sides of the banded bound on ``sum exp(-(S_j - S_{m_n}))`` over each flank.

    The number of bands is ``floor((gamma + log_ratio) / a) + 1``; with
    ``log_ratio`` omitted it defaults to ``4a``.
    """
    if a <= 0:
        raise ValueError("band width must be positive")
    log_ratio = 4.0 * a if log_ratio is None else log_ratio
    n_bands = int(math.floor((valley.gamma + log_ratio) / a)) + 1
    weights = np.exp(-a * np.arange(n_bands))
    right_counts, left_counts = band_counts(pot, valley, c_tilde, a, n_bands)
    sums, excess = [], []
    for sites in flank_sites(valley, c_tilde):
        h = _heights(pot, valley, sites)
        terms = np.exp(-h)
        sums.append(math.fsum(terms))
        excess.append(math.fsum(terms[h >= n_bands * a]))
    return SliceBound(sums[0], float(weights @ right_counts), sums[1], float(weights @ left_counts),
                      excess[0], excess[1])


# -- good environments ------------------------------------------------------

@dataclass(frozen=True)
class GoodEnvParams:
    n: int
    beta: float
    c0: float
    c3: float

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("n must be at least 16")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.c0 <= 0 or self.c3 <= 0:
            raise ValueError("c0 and c3 must be positive")

    @property
    def c_tilde(self) -> float:
        return self.c3 / (1.0 - self.beta) ** 2

    def window(self, sigma: float) -> int:
        return window_bound(self.n, sigma)


def off_core_expectation(env: Environment, valley: BasicValley, c_tilde: float) -> float:
    """``E_{m_n}[L(Theta~, T_{m_n})]`` from the closed-form local times."""
    from .exact_chain import expected_local_times

    total = 0.0
    for sites in flank_sites(valley, c_tilde):
        if sites.size:
            total += float(expected_local_times(env, valley.m_n, sites).sum())
    return total


def is_good_environment(env: Environment, params: GoodEnvParams,
                        valley: BasicValley | None = None, window_factor: float = 64.0) -> dict:
    """Evaluate the three good-environment properties at ``params``.

    The window property is read as ``-W <= M'_n`` and ``M_n <= W``.
    """
    sigma = env.dist.sigma
    if valley is None:
        valley = find_basic_valley(env, params.n, sigma=sigma, window_factor=window_factor)
    w = params.window(sigma)
    report = {
        "valley_exists": valley is not None,
        "window_ok": False,
        "expectation_ok": False,
        "value_of_expectation": math.nan,
        "threshold": 2.0 * params.c0 / math.sqrt(params.c_tilde),
        "window_bound": w,
        "valley": valley,
        "good": False,
    }
    if valley is None:
        return report
    report["window_ok"] = -w <= valley.m_prime and valley.m_right <= w
    value = off_core_expectation(env, valley, params.c_tilde)
    report["value_of_expectation"] = value
    report["expectation_ok"] = value <= report["threshold"]
    report["good"] = report["valley_exists"] and report["window_ok"] and report["expectation_ok"]
    return report
