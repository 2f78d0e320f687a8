"""Command-line front end.

Subcommands ``simulate``, ``valley``, ``verify`` and ``experiment`` read an
optional JSON config and write CSV/JSON files to ``--out``.

Exit status: 0 success, 1 invalid input, 2 runtime failure, 3 a check
failed (or, for ``valley``, no basic valley was found).
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import experiments as ex
from .env_model import EnvDistribution, Environment, Potential
from .exact_chain import (expected_local_time, hit_prob, oracle_expected_local_time,
                          oracle_hit_prob, sandwich_bounds, sandwich_holds)
from .potential import find_basic_valley, gamma_n, window_bound
from .walk_sim import run, stats

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_FAILED = 0, 1, 2, 3
CSV_VERSION = 1


class ConfigError(ValueError):
    pass


_SCHEMAS = {
    "simulate": {"dist", "n", "env_seed", "walk_seed", "betas", "start"},
    "valley": {"dist", "n", "env_seed", "window_factor", "potential_pad"},
    "verify": {"dists", "trials", "mc_trials", "max_length", "max_distance"},
    "experiment": {"kind", "dist", "n", "n_max", "schedule", "replicas", "betas", "a", "d",
                   "trials", "r_list", "c_tildes", "bands", "environments", "beta",
                   "walks_per_env", "c0", "window_factor"},
}

EXPERIMENT_KINDS = ("wald", "sqrt_tail", "existence", "slice", "band", "good_env",
                    "concentration", "beta_scaling", "favorites", "zero_one", "escape")


def load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _SCHEMAS[command]
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    return cfg


def _dist(cfg: dict) -> EnvDistribution:
    raw = cfg.get("dist", {"kind": "two_point", "a": 0.3})
    try:
        return EnvDistribution.from_dict(raw)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad distribution: {err}") from err


def _int(cfg: dict, key: str, default: int, minimum: int = 1) -> int:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return v


def _betas(values) -> list[float]:
    out = []
    for b in values:
        if not isinstance(b, (int, float)) or not 0.0 <= b < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {b!r}")
        out.append(float(b))
    return out


def _seed_pair(args, cfg) -> tuple[int, int]:
    env_seed, walk_seed = ex.replica_seeds(args.seed, 1)[0]
    return int(cfg.get("env_seed", env_seed)), int(cfg.get("walk_seed", walk_seed))


def write_csv(path: Path, header: list[str], rows, name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# sinaiwalk {name} v{CSV_VERSION}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_cell(v) for v in r) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(ex._clean(obj), indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------------

def cmd_simulate(args, cfg) -> int:
    dist = _dist(cfg)
    n = _int(cfg, "n", 1000)
    betas = _betas(cfg.get("betas", [0.5]))
    start = cfg.get("start", 0)
    env_seed, walk_seed = _seed_pair(args, cfg)
    env = Environment(dist, env_seed)
    fld, state = run(env, walk_seed, n, start=start)
    st = stats(fld)
    write_csv(args.out / "local_times.csv", ["site", "count"],
              ((int(s), int(c)) for s, c in zip(fld.sites, fld.counts)), "local_times")
    record = {"env_seed": env_seed, "walk_seed": walk_seed, "n": n, "start": start,
              "final_position": state.position, "total": fld.total, "l_star": st.l_star,
              "favorites": st.favorites, "fav_spread": st.fav_spread,
              "visited": [fld.min_site, fld.max_site], "digest": fld.digest(),
              "y_radius": {f"{b:g}": st.y_radius(b) for b in betas}, "dist": dist.to_dict()}
    write_json(args.out / "stats.json", record)
    return EXIT_OK


def cmd_valley(args, cfg) -> int:
    dist = _dist(cfg)
    n = _int(cfg, "n", 10_000, minimum=16)
    factor = cfg.get("window_factor", 64.0)
    if not isinstance(factor, (int, float)) or factor <= 0:
        raise ConfigError("window_factor must be positive")
    pad = _int(cfg, "potential_pad", 0, minimum=0)
    env_seed, _ = _seed_pair(args, cfg)
    env = Environment(dist, env_seed)
    bv = find_basic_valley(env, n, window_factor=float(factor))
    w = window_bound(n, dist.sigma)
    record = {"env_seed": env_seed, "n": n, "gamma": gamma_n(n), "window_bound": w,
              "found": bv is not None, "valley": bv.to_record() if bv else None}
    lo, hi = (bv.m_prime - pad, bv.m_right + pad) if bv else (-w, w)
    pot = Potential.from_environment(env, lo, hi)
    write_csv(args.out / "potential.csv", ["site", "S"],
              ((k, float(v)) for k, v in zip(range(lo, hi + 1), pot.values)), "potential")
    write_json(args.out / "valley.json", record)
    return EXIT_OK if bv is not None else EXIT_FAILED


def cmd_verify(args, cfg) -> int:
    dists = [_dist({"dist": d}) for d in cfg.get(
        "dists", [{"kind": "two_point", "a": 0.3}, {"kind": "uniform", "low": 0.3}])]
    trials = _int(cfg, "trials", 1000)
    mc_trials = _int(cfg, "mc_trials", 100_000, minimum=1000)
    max_len = _int(cfg, "max_length", 40, minimum=2)
    max_dist = _int(cfg, "max_distance", 30)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    hit_rows, elt_rows, failures = [], [], 0
    sandwich_bad = 0
    for di, dist in enumerate(dists):
        for t in range(trials):
            seed = int(rng.integers(0, 2**63))
            env = Environment(dist, seed)
            length = int(rng.integers(2, max_len + 1))
            a = int(rng.integers(-20, 21))
            b = a + length
            x = int(rng.integers(a, b + 1))
            cf, orc = hit_prob(env, a, x, b), oracle_hit_prob(env, a, x, b)
            err = abs(cf - orc)
            failures += err > 1e-10
            hit_rows.append((di, seed, a, x, b, cf, orc, err))
            i = int(rng.integers(-20, 21))
            dx = int(rng.integers(1, max_dist + 1)) * (1 if rng.random() < 0.5 else -1)
            cf, orc = expected_local_time(env, i, i + dx), oracle_expected_local_time(env, i, i + dx)
            err = abs(cf - orc)
            failures += err > 1e-9 * max(1.0, abs(orc))
            elt_rows.append((di, seed, i, i + dx, cf, orc, err))
            lo_b, val, up_b = sandwich_bounds(env, i, i + dx)
            sandwich_bad += not sandwich_holds(lo_b, val, up_b)
    write_csv(args.out / "hit_prob.csv", ["law", "seed", "a", "x", "b", "closed_form", "oracle", "abs_err"],
              hit_rows, "hit_prob")
    write_csv(args.out / "expected_local_time.csv",
              ["law", "seed", "i", "x", "closed_form", "oracle", "abs_err"], elt_rows, "expected_local_time")
    summary = {"hit_prob_max_err": max(r[-1] for r in hit_rows),
               "local_time_max_err": max(r[-1] for r in elt_rows),
               "oracle_failures": failures, "sandwich_violations": sandwich_bad, "mc": {}}
    ok = failures == 0 and sandwich_bad == 0
    for di, dist in enumerate(dists):
        wald = ex.verify_wald_bounds(dist, 5.0, 5.0, mc_trials, seed=args.seed + di, workers=args.workers)
        tail = ex.verify_sqrt_tail(dist, [4, 16, 64, 256, 1024], mc_trials, seed=args.seed + di,
                                   workers=args.workers)
        summary["mc"][dist.kind] = {"wald": wald.to_dict(), "sqrt_tail": tail.to_dict()}
        ok &= bool(wald.passed and tail.passed)
    summary["passed"] = ok
    write_json(args.out / "verify.json", summary)
    return EXIT_OK if ok else EXIT_FAILED


def _campaign(cfg, args) -> ex.Campaign:
    if "schedule" in cfg:
        schedule = cfg["schedule"]
    else:
        schedule = ex.default_schedule(_int(cfg, "n_max", 1024, minimum=16))
    return ex.Campaign(_dist(cfg), list(schedule), _int(cfg, "replicas", 10),
                       _betas(cfg.get("betas", [0.5])), seed=args.seed, workers=args.workers,
                       walks_per_env=_int(cfg, "walks_per_env", 1))


def cmd_experiment(args, cfg) -> int:
    kind = cfg.get("kind", "concentration")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}")
    dist = _dist(cfg)
    seed, workers = args.seed, args.workers
    factor = float(cfg.get("window_factor", 64.0))
    if kind == "wald":
        rep = ex.verify_wald_bounds(dist, cfg.get("a", 5.0), cfg.get("d", 5.0),
                                    _int(cfg, "trials", 100_000, 1000), seed, workers)
    elif kind == "sqrt_tail":
        rep = ex.verify_sqrt_tail(dist, cfg.get("r_list", [4, 16, 64, 256, 1024]),
                                  _int(cfg, "trials", 100_000), seed, workers)
    elif kind == "existence":
        rep = ex.valley_existence(dist, _int(cfg, "n", 10**6, 16), _int(cfg, "environments", 200),
                                  seed, workers, factor)
    elif kind == "slice":
        rep = ex.verify_slice_bound(dist, _int(cfg, "n", 10**6, 16), _int(cfg, "environments", 500),
                                    tuple(cfg.get("c_tildes", [1.0, 16.0, 64.0])), seed, workers, factor)
    elif kind == "band":
        rep = ex.verify_band_expectation(dist, _int(cfg, "n", 10**6, 16), cfg.get("c_tildes", [1, 4, 16]),
                                         cfg.get("bands", [1, 2, 3]), _int(cfg, "replicas", 200),
                                         seed, workers, factor)
    elif kind == "good_env":
        beta = _betas([cfg.get("beta", 0.5)])[0]
        rep = ex.verify_good_env_rate(dist, _int(cfg, "n", 10**6, 16), beta, _int(cfg, "replicas", 200, 100),
                                      seed, workers, cfg.get("c0"), factor)
    elif kind == "escape":
        rep = ex.probe_escape(dist, _int(cfg, "n", 10**6, 16), _int(cfg, "replicas", 100), seed, workers,
                              window_factor=factor)
    else:
        campaign = _campaign(cfg, args)
        probe = {"concentration": ex.probe_concentration, "beta_scaling": ex.probe_beta_scaling,
                 "favorites": ex.probe_favorite_sites, "zero_one": ex.probe_zero_one}[kind]
        rep = probe(campaign)
    rep.to_csv(args.out / f"{kind}.csv")
    rep.to_json(args.out / f"{kind}.json")
    return EXIT_FAILED if rep.passed is False else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "valley": cmd_valley, "verify": cmd_verify,
            "experiment": cmd_experiment}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sinaiwalk", description="Random walk in random environment laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=_u64, default=0, help="top-level seed (default 0)")
        s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        s.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.out is None:
            raise ConfigError("--out is required")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config, args.command)
        args.out = Path(args.out)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as err:
        print(f"sinaiwalk: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:  # noqa: BLE001 - any other failure is a runtime error
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
