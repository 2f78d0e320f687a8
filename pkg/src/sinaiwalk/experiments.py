"""Seeded Monte Carlo campaigns: bound checks and concentration probes.

Every replica gets its own ``(env_seed, walk_seed)`` pair derived from the
campaign seed and the replica index, so a row can be recomputed alone and
results do not depend on how replicas are spread over workers.

Pass/fail thresholds for asymptotic statements are fixed-``n`` calibration
choices; each report records the thresholds it used.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .env_model import EnvDistribution, Environment, Potential
from .exact_chain import expected_local_times, wald_bound
from .potential import (GoodEnvParams, band_counts, find_basic_valley, slice_upper_bound,
                        window_bound)
from .walk_sim import LocalTimeField, Walker, concentration_radius, hitting_time, stats

__all__ = [
    "Campaign",
    "ExperimentReport",
    "calibrate_c0",
    "default_schedule",
    "map_replicas",
    "probe_beta_scaling",
    "probe_concentration",
    "probe_escape",
    "probe_favorite_sites",
    "probe_zero_one",
    "replica_seeds",
    "inclusion_violations",
    "run_campaign",
    "valley_existence",
    "verify_band_expectation",
    "verify_good_env_rate",
    "verify_slice_bound",
    "verify_sqrt_tail",
    "verify_wald_bounds",
]

REPORT_VERSION = 1
SLACK_SE = 3.0
BLOCK = 10_000


# -- plumbing ----------------------------------------------------------------

def replica_seeds(seed: int, count: int, start: int = 0) -> list[tuple[int, int]]:
    """``(env_seed, walk_seed)`` for replicas ``start .. start + count - 1``."""
    out = []
    for r in range(start, start + count):
        state = np.random.SeedSequence([int(seed), r]).generate_state(2, dtype=np.uint64)
        out.append((int(state[0]), int(state[1])))
    return out


def map_replicas(func, tasks, workers: int = 1) -> list:
    """``[func(t) for t in tasks]``, optionally over a process pool (order kept)."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else math.nan


def _clean(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


@dataclass
class ExperimentReport:
    """Rows (one per replica and ``n``), a summary and an overall verdict.

    ``passed`` is None for exploratory reports.
    """

    name: str
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: bool | None = None
    params: dict = field(default_factory=dict)

    def sorted_rows(self) -> list[dict]:
        return sorted(self.rows, key=lambda r: (r.get("replica", 0), r.get("n", 0)))

    def to_csv(self, path=None) -> str:
        rows = self.sorted_rows()
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO(newline="")
        buf.write(f"# sinaiwalk report v{REPORT_VERSION}: {self.name}\n")
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return _clean({"name": self.name, "version": REPORT_VERSION, "passed": self.passed,
                       "params": self.params, "summary": self.summary})

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# -- walks of the potential ----------------------------------------------------

def _increments(dist: EnvDistribution, rng: np.random.Generator, size) -> np.ndarray:
    a = dist.sample(rng, size)
    return np.log((1.0 - a) / a)


def _wald_block(task):
    dist, a, d, trials, seed = task
    rng = np.random.default_rng(seed)
    s = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    down_first = np.zeros(trials, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        s[idx] += _increments(dist, rng, idx.size)
        down = s[idx] <= -a
        up = s[idx] >= d
        down_first[idx[down]] = True
        alive[idx[down | up]] = False
    return int(down_first.sum())


def _blocks(seed: int, trials: int):
    n_blocks = -(-trials // BLOCK)
    children = np.random.SeedSequence(int(seed)).spawn(n_blocks)
    sizes = [BLOCK] * (n_blocks - 1) + [trials - BLOCK * (n_blocks - 1)]
    return list(zip(children, sizes))


def verify_wald_bounds(dist: EnvDistribution, a: float, d: float, trials: int,
                       seed: int = 0, workers: int = 1) -> ExperimentReport:
    """Monte Carlo of ``Q[V-_a < V+_d]`` and ``Q[V-_a > V+_d]`` against their bounds."""
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    bound_down, bound_up = wald_bound(a, d, dist.eta0)
    tasks = [(dist, a, d, size, child) for child, size in _blocks(seed, trials)]
    down = sum(map_replicas(_wald_block, tasks, workers))
    p_down = down / trials
    p_up = 1.0 - p_down
    se = _se(p_down, trials)
    ok_down = p_down <= bound_down + SLACK_SE * se
    ok_up = p_up <= bound_up + SLACK_SE * se
    summary = {"p_down_first": p_down, "p_up_first": p_up, "stderr": se,
               "bound_down_first": bound_down, "bound_up_first": bound_up,
               "ok_down_first": ok_down, "ok_up_first": ok_up, "trials": trials,
               "slack_se": SLACK_SE}
    return ExperimentReport("wald_bounds", [], summary, ok_down and ok_up,
                            {"dist": dist.to_dict(), "a": a, "d": d, "seed": seed})


def _tail_block(task):
    dist, r_max, trials, seed = task
    rng = np.random.default_rng(seed)
    s = np.zeros(trials)
    survive = np.zeros(r_max + 1, dtype=np.int64)
    survive[0] = trials
    alive = np.ones(trials, dtype=bool)
    for m in range(1, r_max + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s[idx] += _increments(dist, rng, idx.size)
        alive[idx[s[idx] < 0]] = False
        survive[m] = alive.sum()
    return survive


def verify_sqrt_tail(dist: EnvDistribution, r_list, trials: int, seed: int = 0,
                     workers: int = 1, slope_max: float = -0.4) -> ExperimentReport:
    """Tail ``Q[V_0^- > r]`` of the first strict descent below 0, with its
    log-log slope and the smallest ``b`` with ``est <= b / sqrt(r)`` everywhere."""
    r = np.asarray(r_list, dtype=np.int64)
    if r.size < 2 or np.any(np.diff(r) <= 0) or r[0] < 1:
        raise ValueError("r_list must be increasing positive integers (at least two)")
    if trials < 1:
        raise ValueError("trials must be positive")
    tasks = [(dist, int(r[-1]), size, child) for child, size in _blocks(seed, trials)]
    survive = sum(map_replicas(_tail_block, tasks, workers))
    est = survive[r] / trials
    se = np.sqrt(est * (1 - est) / trials)
    rows = [{"r": int(ri), "estimate": float(e), "stderr": float(s)} for ri, e, s in zip(r, est, se)]
    pos = est > 0
    slope = float(np.polyfit(np.log(r[pos]), np.log(est[pos]), 1)[0]) if pos.sum() >= 2 else -math.inf
    b_fit = float(np.max(est * np.sqrt(r)))
    bound_ok = bool(np.all(est <= b_fit / np.sqrt(r) + SLACK_SE * se))
    summary = {"slope": slope, "b_fit": b_fit, "slope_max": slope_max, "bound_ok": bound_ok,
               "trials": trials}
    return ExperimentReport("sqrt_tail", rows, summary, slope <= slope_max and bound_ok,
                            {"dist": dist.to_dict(), "r_list": r.tolist(), "seed": seed})


# -- environment campaigns -----------------------------------------------------

def _valley_task(task):
    dist, env_seed, n, window_factor = task
    env = Environment(dist, env_seed)
    return find_basic_valley(env, n, window_factor=window_factor)


def _slice_task(task):
    dist, env_seed, n, c_tildes, window_factor = task
    env = Environment(dist, env_seed)
    bv = find_basic_valley(env, n, window_factor=window_factor)
    if bv is None:
        return None
    a = dist.log_ratio / 4.0
    pot = Potential.from_environment(env, bv.m_prime, bv.m_right)
    out = []
    for c in c_tildes:
        sb = slice_upper_bound(pot, bv, c, a, dist.log_ratio)
        out.append((c, sb))
    return bv, out


def verify_slice_bound(dist: EnvDistribution, n: int, environments: int, c_tildes=(1.0, 16.0, 64.0),
                       seed: int = 0, workers: int = 1, window_factor: float = 64.0,
                       max_draws: int | None = None) -> ExperimentReport:
    """Deterministic banded bound on the flank sums over environments with a basic valley.

    Environments are drawn until ``environments`` of them have a basic valley.
    """
    max_draws = 4 * environments if max_draws is None else max_draws
    rows, violations, draws = [], 0, 0
    next_replica = 0
    while len({r["replica"] for r in rows}) < environments and draws < max_draws:
        need = environments - len({r["replica"] for r in rows})
        seeds = replica_seeds(seed, need, next_replica)
        tasks = [(dist, es, n, tuple(c_tildes), window_factor) for es, _ in seeds]
        results = map_replicas(_slice_task, tasks, workers)
        for k, ((es, _), res) in enumerate(zip(seeds, results)):
            draws += 1
            if res is None:
                continue
            bv, checks = res
            for c, sb in checks:
                ok = sb.holds
                violations += not ok
                rows.append({"replica": next_replica + k, "env_seed": es, "n": n, "c_tilde": c,
                             "right_sum": sb.right_sum, "right_bound": sb.right_bound,
                             "left_sum": sb.left_sum, "left_bound": sb.left_bound, "holds": ok})
        next_replica += need
    found = len({r["replica"] for r in rows})
    summary = {"environments": found, "draws": draws, "violations": violations}
    return ExperimentReport("slice_bound", rows, summary, found >= environments and violations == 0,
                            {"dist": dist.to_dict(), "n": n, "c_tildes": list(c_tildes), "seed": seed})


def valley_existence(dist: EnvDistribution, n: int, environments: int, seed: int = 0,
                     workers: int = 1, window_factor: float = 64.0,
                     threshold: float = 0.95) -> ExperimentReport:
    """Fraction of environments whose basic valley exists."""
    seeds = replica_seeds(seed, environments)
    tasks = [(dist, es, n, window_factor) for es, _ in seeds]
    valleys = map_replicas(_valley_task, tasks, workers)
    rows = []
    for k, ((es, _), bv) in enumerate(zip(seeds, valleys)):
        row = {"replica": k, "env_seed": es, "n": n, "exists": bv is not None}
        if bv is not None:
            row.update(m_prime=bv.m_prime, m_n=bv.m_n, m_right=bv.m_right, depth=bv.depth)
        rows.append(row)
    rate = sum(r["exists"] for r in rows) / environments
    summary = {"rate": rate, "stderr": _se(rate, environments), "threshold": threshold,
               "environments": environments}
    return ExperimentReport("valley_existence", rows, summary, rate >= threshold,
                            {"dist": dist.to_dict(), "n": n, "seed": seed,
                             "window_factor": window_factor})


def _band_task(task):
    dist, env_seed, n, c_tildes, n_bands, window_factor = task
    env = Environment(dist, env_seed)
    bv = find_basic_valley(env, n, window_factor=window_factor)
    if bv is None:
        return None
    a = dist.log_ratio / 4.0
    pot = Potential.from_environment(env, bv.m_prime, bv.m_right)
    return np.array([band_counts(pot, bv, c, a, n_bands)[0] for c in c_tildes], dtype=float)


def verify_band_expectation(dist: EnvDistribution, n: int, c_tildes, i_list, replicas: int,
                            seed: int = 0, workers: int = 1, window_factor: float = 64.0,
                            stability: float = 3.0) -> ExperimentReport:
    """Mean number of right-flank sites in band ``i`` (width ``Lambda/4``) per
    ``c~``, and the fitted constant ``c = max_i est * sqrt(c~) / i^3``."""
    i_arr = np.asarray(i_list, dtype=np.int64)
    c_arr = np.asarray(c_tildes, dtype=float)
    if np.any(i_arr < 1):
        raise ValueError("band indices start at 1")
    n_bands = int(i_arr.max())
    seeds = replica_seeds(seed, replicas)
    tasks = [(dist, es, n, tuple(c_arr), n_bands, window_factor) for es, _ in seeds]
    results = [r for r in map_replicas(_band_task, tasks, workers) if r is not None]
    used = len(results)
    rows = []
    if used == 0:
        return ExperimentReport("band_expectation", rows, {"replicas_used": 0, "flag": "no basic valley"},
                                False, {"n": n, "seed": seed})
    stack = np.stack(results)[:, :, i_arr - 1]
    mean = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / math.sqrt(used) if used > 1 else np.full(mean.shape, math.nan)
    c_hat = []
    for ci, c in enumerate(c_arr):
        vals = mean[ci] * math.sqrt(c) / i_arr.astype(float) ** 3
        c_hat.append(float(vals.max()))
        for ii, i in enumerate(i_arr):
            rows.append({"c_tilde": float(c), "band": int(i), "estimate": float(mean[ci, ii]),
                         "stderr": float(se[ci, ii])})
    positive = [c for c in c_hat if c > 0]
    ratio = max(positive) / min(positive) if positive else math.inf
    summary = {"c_hat": c_hat, "ratio": ratio, "stability": stability, "replicas_used": used,
               "flag": "stderr undefined" if used < 2 else ""}
    return ExperimentReport("band_expectation", rows, summary, ratio <= stability,
                            {"dist": dist.to_dict(), "n": n, "seed": seed, "c_tildes": c_arr.tolist(),
                             "bands": i_arr.tolist()})


def _off_core_profile(task):
    # per-distance local-time totals around m_n, from which the off-core
    # expectation is read off for any c~
    dist, env_seed, n, window_factor = task
    env = Environment(dist, env_seed)
    bv = find_basic_valley(env, n, window_factor=window_factor)
    if bv is None:
        return None, None
    sites = np.concatenate((np.arange(bv.m_prime, bv.m_n), np.arange(bv.m_n + 1, bv.m_right + 1)))
    vals = expected_local_times(env, bv.m_n, sites) if sites.size else np.empty(0)
    dist_to_m = np.abs(sites - bv.m_n)
    per_dist = np.bincount(dist_to_m, weights=vals) if sites.size else np.zeros(1)
    # tail[k] = total over sites at distance >= k
    tail = np.concatenate((np.cumsum(per_dist[::-1])[::-1], [0.0]))
    return bv, tail


def _tail_at(tail: np.ndarray, c_tilde: float) -> float:
    k = max(math.ceil(c_tilde), 0)
    return float(tail[min(k, tail.size - 1)])


def calibrate_c0(tails, beta: float) -> tuple[float, float]:
    """Solve ``c0 = 2 * mean(sqrt(c~) E(c~))`` with ``c~ = 64 c0^2 / (1 - beta)^2``.

    Since ``sqrt(c~) = 8 c0 / (1 - beta)`` the fixed point is the root of
    ``mean E(c~) = (1 - beta) / 16``; ``E`` is a nonincreasing step function
    of ``c~`` so the root is bracketed and found by bisection on integers.
    Returns ``(c0, c~)``.
    """
    tails = [t for t in tails if t is not None]
    if not tails:
        raise ValueError("no environments to calibrate on")
    target = (1.0 - beta) / 16.0

    def mean_e(c):
        return float(np.mean([_tail_at(t, c) for t in tails]))

    lo, hi = 1, max(t.size for t in tails)
    if mean_e(lo) <= target:
        c_tilde = 1.0
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if mean_e(mid) > target:
                lo = mid
            else:
                hi = mid
        c_tilde = float(hi)
    c0 = (1.0 - beta) * math.sqrt(c_tilde) / 8.0
    return c0, c_tilde


def verify_good_env_rate(dist: EnvDistribution, n: int, beta: float, replicas: int,
                         seed: int = 0, workers: int = 1, c0: float | None = None,
                         window_factor: float = 64.0) -> ExperimentReport:
    """Fraction of good environments with calibrated ``c0`` and ``c3 = 64 c0^2``."""
    if replicas < 100:
        raise ValueError("replicas must be at least 100")
    seeds = replica_seeds(seed, replicas)
    tasks = [(dist, es, n, window_factor) for es, _ in seeds]
    results = map_replicas(_off_core_profile, tasks, workers)
    tails = [t for _, t in results]
    if c0 is None:
        c0, _ = calibrate_c0(tails, beta)
    params = GoodEnvParams(n, beta, c0, 64.0 * c0 * c0)
    sigma = dist.sigma
    w = window_bound(n, sigma)
    threshold = 2.0 * params.c0 / math.sqrt(params.c_tilde)
    rows = []
    for k, ((es, _), (bv, tail)) in enumerate(zip(seeds, results)):
        row = {"replica": k, "env_seed": es, "n": n, "valley_exists": bv is not None,
               "window_ok": False, "expectation_ok": False, "expectation": math.nan}
        if bv is not None:
            value = _tail_at(tail, params.c_tilde)
            row.update(window_ok=-w <= bv.m_prime and bv.m_right <= w, expectation=value,
                       expectation_ok=value <= threshold, m_prime=bv.m_prime, m_n=bv.m_n,
                       m_right=bv.m_right)
        row["good"] = row["valley_exists"] and row["window_ok"] and row["expectation_ok"]
        rows.append(row)
    rates = {key: sum(r[key] for r in rows) / replicas
             for key in ("valley_exists", "window_ok", "expectation_ok", "good")}
    rate = rates["good"]
    se = _se(rate, replicas)
    summary = {"rate": rate, "stderr": se, "rates": rates, "c0": c0, "c3": params.c3,
               "c_tilde": params.c_tilde, "threshold": threshold, "window_bound": w,
               "replicas": replicas}
    return ExperimentReport("good_env_rate", rows, summary, rate >= 0.5 - SLACK_SE * se,
                            {"dist": dist.to_dict(), "n": n, "beta": beta, "seed": seed})


# -- walk campaigns --------------------------------------------------------------

def default_schedule(n_max: int) -> list[int]:
    """``16 * 2^j`` up to ``n_max``."""
    if n_max < 16:
        raise ValueError("n_max must be at least 16")
    out, n = [], 16
    while n <= n_max:
        out.append(n)
        n *= 2
    return out


@dataclass
class Campaign:
    dist: EnvDistribution
    n_schedule: list[int]
    replicas: int
    betas: list[float] = field(default_factory=lambda: [0.5])
    seed: int = 0
    workers: int = 1
    walks_per_env: int = 1

    def __post_init__(self):
        sched = np.asarray(self.n_schedule)
        if sched.size == 0 or np.any(np.diff(sched) <= 0) or sched[0] < 1:
            raise ValueError("schedule must be a strictly increasing list of positive integers")
        if self.replicas < 1 or self.walks_per_env < 1:
            raise ValueError("replicas and walks_per_env must be at least 1")
        for b in self.betas:
            if not 0.0 <= b < 1.0:
                raise ValueError("betas must lie in [0, 1)")

    def seeds(self) -> list[tuple[int, int]]:
        return replica_seeds(self.seed, self.replicas)


def _trajectory_task(task):
    dist, env_seed, walk_seed, schedule, betas = task
    walker = Walker(Environment(dist, env_seed), walk_seed)
    rows = []
    min_y = {b: math.inf for b in betas}
    max_l = 0.0
    min_spread = math.inf
    for n in schedule:
        walker.advance(n - walker.step_count)
        fld = walker.field()
        st = stats(fld)
        max_l = max(max_l, st.l_star / n)
        min_spread = min(min_spread, st.fav_spread)
        row = {"n": n, "l_star": st.l_star, "fav_min": int(st.favorites[0]),
               "fav_max": int(st.favorites[-1]), "fav_spread": st.fav_spread,
               "max_l_ratio": max_l, "min_spread": min_spread,
               "visited_min": fld.min_site, "visited_max": fld.max_site, "digest": fld.digest()}
        for b in betas:
            y = concentration_radius(fld, b)
            min_y[b] = min(min_y[b], y)
            row[f"y_{b:g}"] = y
            row[f"min_y_{b:g}"] = min_y[b]
        rows.append(row)
    return rows


def run_campaign(campaign: Campaign) -> list[dict]:
    """One row per replica (and walk) per ``n`` with running trackers."""
    tasks, keys = [], []
    for r, (es, ws) in enumerate(campaign.seeds()):
        for w in range(campaign.walks_per_env):
            walk_seed = ws if w == 0 else int(np.random.SeedSequence([ws, w]).generate_state(1, np.uint64)[0])
            tasks.append((campaign.dist, es, walk_seed, list(campaign.n_schedule), list(campaign.betas)))
            keys.append((r, w, es, walk_seed))
    results = map_replicas(_trajectory_task, tasks, campaign.workers)
    rows = []
    for (r, w, es, ws), traj in zip(keys, results):
        for row in traj:
            rows.append({"replica": r, "walk": w, "env_seed": es, "walk_seed": ws, **row})
    rows.sort(key=lambda x: (x["replica"], x["walk"], x["n"]))
    return rows


def _terminal(rows: list[dict]) -> list[dict]:
    last = {}
    for r in rows:
        key = (r["replica"], r["walk"])
        if key not in last or r["n"] > last[key]["n"]:
            last[key] = r
    return [last[k] for k in sorted(last)]


def _monotone(rows: list[dict], key: str, direction: int) -> bool:
    prev = {}
    for r in sorted(rows, key=lambda x: (x["replica"], x["walk"], x["n"])):
        k = (r["replica"], r["walk"])
        if k in prev and direction * (r[key] - prev[k]) < 0:
            return False
        prev[k] = r[key]
    return True


def probe_concentration(campaign: Campaign, rows: list[dict] | None = None) -> ExperimentReport:
    """Running minimum of ``Y_{n,beta}`` and running maximum of ``L*(n)/n``
    along the schedule; passes iff every terminal minimum is finite and the
    trackers are monotone."""
    rows = run_campaign(campaign) if rows is None else rows
    term = _terminal(rows)
    summary = {"replicas": len(term)}
    ok = True
    for b in campaign.betas:
        key = f"min_y_{b:g}"
        vals = np.array([r[key] for r in term], dtype=float)
        finite = np.isfinite(vals)
        mono = _monotone(rows, key, -1)
        ok &= bool(finite.all()) and mono
        last_y = [r[f"y_{b:g}"] for r in term]
        summary[f"beta_{b:g}"] = {"median_min_y": float(np.median(vals)), "max_min_y": float(vals.max()),
                                  "median_terminal_y": float(np.median(last_y)),
                                  "finite": int(finite.sum()), "monotone": mono}
    lr = np.array([r["max_l_ratio"] for r in term])
    summary["max_l_ratio"] = {"median": float(np.median(lr)), "q10": float(np.quantile(lr, 0.1)),
                              "monotone": _monotone(rows, "max_l_ratio", 1)}
    ok &= summary["max_l_ratio"]["monotone"]
    return ExperimentReport("concentration", rows, summary, ok,
                            {"dist": campaign.dist.to_dict(), "schedule": list(campaign.n_schedule),
                             "betas": list(campaign.betas), "seed": campaign.seed})


def probe_beta_scaling(campaign: Campaign, rows: list[dict] | None = None,
                       slope_max: float = 2.5) -> ExperimentReport:
    """Slope of ``log median(min Y)`` against ``log 1/(1 - beta)``."""
    betas = np.asarray(campaign.betas, dtype=float)
    if betas.size < 4:
        raise ValueError("need at least four beta values")
    if np.unique(betas).size < 2:
        raise ValueError("beta values must not all be equal")
    rows = run_campaign(campaign) if rows is None else rows
    term = _terminal(rows)
    medians = np.array([np.median([r[f"min_y_{b:g}"] for r in term]) for b in betas], dtype=float)
    x = np.log(1.0 / (1.0 - betas))
    y = np.log(medians)
    flags = []
    if np.unique(medians).size == 1:
        flags.append("degenerate medians")
        slope, lo, hi = math.nan, math.nan, math.nan
    else:
        fit = sps.linregress(x, y)
        t = sps.t.ppf(0.975, betas.size - 2)
        slope, lo, hi = float(fit.slope), float(fit.slope - t * fit.stderr), float(fit.slope + t * fit.stderr)
    if len(term) < 2:
        flags.append("single replica")
    summary = {"slope": slope, "ci95": [lo, hi], "medians": medians.tolist(), "slope_max": slope_max,
               "flags": flags}
    passed = bool(math.isfinite(slope) and slope <= slope_max)
    return ExperimentReport("beta_scaling", [], summary, passed,
                            {"betas": betas.tolist(), "seed": campaign.seed})


def inclusion_violations(fld: LocalTimeField, radii) -> int:
    """Count radii ``r`` for which some window ``[x - r, x + r]`` holds more
    than ``n - L*`` of the mass while the favourites spread beyond ``2r``."""
    st = stats(fld)
    prefix = np.concatenate(([0], np.cumsum(fld.counts)))
    span = fld.counts.size
    x = np.arange(span)
    bad = 0
    for r in radii:
        r = int(r)
        masses = prefix[np.minimum(x + r + 1, span)] - prefix[np.maximum(x - r, 0)]
        if masses.max() > fld.total - st.l_star and st.fav_spread > 2 * r:
            bad += 1
    return bad


def _inclusion_task(task):
    dist, env_seed, walk_seed, n, radii = task
    walker = Walker(Environment(dist, env_seed), walk_seed)
    walker.advance(n)
    return inclusion_violations(walker.field(), radii)


def probe_favorite_sites(campaign: Campaign, rows: list[dict] | None = None, c4: float | None = None,
                         trajectories: int = 10_000, n_check: int = 2000) -> ExperimentReport:
    """Running minimum of the favourite spread, and the deterministic check
    that mass above ``n - L*`` in a window of radius ``c4/2`` confines all
    favourites to a set of diameter ``c4``.

    Without ``c4`` every radius from 0 to 32 is checked.
    """
    rows = run_campaign(campaign) if rows is None else rows
    term = _terminal(rows)
    radii = list(range(0, 33)) if c4 is None else [math.floor(c4 / 2)]
    seeds = replica_seeds(campaign.seed + 1, trajectories)
    tasks = [(campaign.dist, es, ws, n_check, radii) for es, ws in seeds]
    violations = int(sum(map_replicas(_inclusion_task, tasks, campaign.workers)))
    spreads = np.array([r["min_spread"] for r in term], dtype=float)
    mono = _monotone(rows, "min_spread", -1)
    summary = {"violations": violations, "trajectories": trajectories, "radii": radii,
               "median_min_spread": float(np.median(spreads)), "monotone": mono}
    return ExperimentReport("favorite_sites", rows, summary, violations == 0 and mono,
                            {"seed": campaign.seed, "c4": c4})


def probe_zero_one(campaign: Campaign, rows: list[dict] | None = None) -> ExperimentReport:
    """Between- and within-environment dispersion of ``max_n L*(n)/n``;
    exploratory (no verdict)."""
    rows = run_campaign(campaign) if rows is None else rows
    term = _terminal(rows)
    by_env: dict[int, list[float]] = {}
    for r in term:
        by_env.setdefault(r["replica"], []).append(r["max_l_ratio"])
    groups = [np.asarray(v) for _, v in sorted(by_env.items())]

    def dispersion(gs):
        within = float(np.mean([g.var(ddof=1) for g in gs])) if gs[0].size > 1 else math.nan
        between = float(np.var([g.mean() for g in gs], ddof=1)) if len(gs) > 1 else math.nan
        return within, between

    within, between = dispersion(groups)
    ratio = between / within if within and math.isfinite(within) and within > 0 else math.nan
    ratio_se = math.nan
    if len(groups) > 2 and math.isfinite(ratio):
        # jackknife over environments
        jk = []
        for k in range(len(groups)):
            w_k, b_k = dispersion(groups[:k] + groups[k + 1:])
            jk.append(b_k / w_k)
        jk = np.asarray(jk)
        g = len(groups)
        ratio_se = float(math.sqrt((g - 1) / g * np.sum((jk - jk.mean()) ** 2)))
    summary = {"environments": len(groups), "walks_per_env": int(groups[0].size),
               "within_var": within, "between_var": between, "ratio": ratio, "ratio_se": ratio_se}
    if len(groups) == 1:
        summary["note"] = "single environment: within-environment dispersion only"
    return ExperimentReport("zero_one", rows, summary, None,
                            {"seed": campaign.seed, "schedule": list(campaign.n_schedule)})


def _escape_task(task):
    dist, env_seed, walk_seed, n, window_factor = task
    env = Environment(dist, env_seed)
    bv = find_basic_valley(env, n, window_factor=window_factor)
    if bv is None:
        return None
    walker = Walker(env, walk_seed)
    walker.advance(n)
    fld = walker.field()
    escaped = fld.min_site < bv.m_prime or fld.max_site > bv.m_right
    cap = max(1, math.floor(n / math.log(n) ** 4))
    t = hitting_time(env, walk_seed, bv.m_n, cap)
    return bv, escaped, t


def probe_escape(dist: EnvDistribution, n: int, replicas: int, seed: int = 0, workers: int = 1,
                 threshold: float = 0.10, window_factor: float = 64.0,
                 max_draws: int | None = None) -> ExperimentReport:
    """Fractions of walks leaving ``[M'_n, M_n]`` before ``n`` and of walks
    with ``T_{m_n} > n / (log n)^4``, over environments with a basic valley."""
    max_draws = 2 * replicas if max_draws is None else max_draws
    seeds = replica_seeds(seed, max_draws)
    tasks = [(dist, es, ws, n, window_factor) for es, ws in seeds]
    rows = []
    for k, ((es, ws), res) in enumerate(zip(seeds, map_replicas(_escape_task, tasks, workers))):
        if res is None or len(rows) >= replicas:
            continue
        bv, escaped, t = res
        rows.append({"replica": k, "env_seed": es, "walk_seed": ws, "n": n, "m_prime": bv.m_prime,
                     "m_n": bv.m_n, "m_right": bv.m_right, "escaped": escaped,
                     "hit_m_n": t if t is not None else "", "slow": t is None})
    used = len(rows)
    f_esc = sum(r["escaped"] for r in rows) / used if used else math.nan
    f_slow = sum(r["slow"] for r in rows) / used if used else math.nan
    summary = {"pairs": used, "escape_fraction": f_esc, "slow_fraction": f_slow, "threshold": threshold,
               "hit_cap": max(1, math.floor(n / math.log(n) ** 4))}
    passed = used >= replicas and f_esc <= threshold and f_slow <= threshold
    return ExperimentReport("escape", rows, summary, passed, {"n": n, "seed": seed})
