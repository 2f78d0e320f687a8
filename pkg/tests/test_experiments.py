import json
import math

import numpy as np
import pytest

from sinaiwalk import experiments as ex
from sinaiwalk.env_model import EnvDistribution, Environment
from sinaiwalk.potential import find_basic_valley, off_core_expectation
from sinaiwalk.walk_sim import LocalTimeField, run

TP = EnvDistribution.two_point()


def small_campaign(**kw):
    args = dict(dist=TP, n_schedule=ex.default_schedule(512), replicas=6, betas=[0.5, 0.75], seed=3)
    args.update(kw)
    return ex.Campaign(**args)


def test_replica_seeds_stable_and_distinct():
    a = ex.replica_seeds(5, 10)
    assert a == ex.replica_seeds(5, 10)
    assert a[4:] == ex.replica_seeds(5, 6, start=4)
    flat = [s for pair in a for s in pair]
    assert len(set(flat)) == len(flat)
    assert ex.replica_seeds(6, 1) != a[:1]


def test_default_schedule():
    assert ex.default_schedule(100) == [16, 32, 64]
    with pytest.raises(ValueError):
        ex.default_schedule(8)


def test_campaign_validation():
    with pytest.raises(ValueError):
        small_campaign(n_schedule=[32, 16])
    with pytest.raises(ValueError):
        small_campaign(replicas=0)
    with pytest.raises(ValueError):
        small_campaign(betas=[1.0])


def test_campaign_rows_match_direct_runs():
    camp = small_campaign(replicas=3)
    rows = ex.run_campaign(camp)
    assert len(rows) == 3 * len(camp.n_schedule)
    for r, (es, ws) in enumerate(camp.seeds()):
        fld, _ = run(Environment(TP, es), ws, 512)
        last = [row for row in rows if row["replica"] == r and row["n"] == 512][0]
        assert last["digest"] == fld.digest()


def test_campaign_worker_invariance():
    one = ex.run_campaign(small_campaign(workers=1))
    two = ex.run_campaign(small_campaign(workers=2))
    assert one == two


def test_running_trackers_monotone():
    rows = ex.run_campaign(small_campaign(walks_per_env=2))
    assert ex._monotone(rows, "min_y_0.5", -1)
    assert ex._monotone(rows, "max_l_ratio", 1)
    assert ex._monotone(rows, "min_spread", -1)
    for row in rows:
        assert row["min_y_0.5"] <= row["y_0.5"] and row["min_y_0.5"] <= row["min_y_0.75"]


def test_report_csv_and_json(tmp_path):
    camp = small_campaign()
    rep = ex.probe_concentration(camp)
    text = rep.to_csv(tmp_path / "c.csv")
    assert text.startswith("# sinaiwalk report v1: ")
    assert "\r" not in text
    assert (tmp_path / "c.csv").read_bytes() == text.encode()
    lines = text.splitlines()
    header = lines[1].split(",")
    assert header[:2] == ["replica", "walk"]
    assert len(lines) == 2 + len(rep.rows)
    data = json.loads(rep.to_json())
    assert data["version"] == ex.REPORT_VERSION and data["passed"] is rep.passed
    assert ex.probe_concentration(camp).to_csv() == text


def test_clean_handles_numpy_and_nonfinite():
    out = ex._clean({"a": np.int64(2), "b": np.float32(0.5), "c": [math.nan, math.inf], "d": np.arange(2)})
    assert out == {"a": 2, "b": 0.5, "c": [None, "inf"], "d": [0, 1]}
    json.dumps(out)


def test_wald_report():
    rep = ex.verify_wald_bounds(TP, 2.0, 2.0, 4000, seed=1)
    s = rep.summary
    assert s["p_down_first"] + s["p_up_first"] == pytest.approx(1.0)
    assert rep.passed == (s["ok_down_first"] and s["ok_up_first"])
    with pytest.raises(ValueError):
        ex.verify_wald_bounds(TP, 2.0, 2.0, 999)


def test_wald_deterministic_across_workers():
    a = ex.verify_wald_bounds(TP, 3.0, 1.0, 25_000, seed=4, workers=1)
    b = ex.verify_wald_bounds(TP, 3.0, 1.0, 25_000, seed=4, workers=3)
    assert a.summary == b.summary


def test_sqrt_tail_report():
    rep = ex.verify_sqrt_tail(TP, [1, 4, 16], 5000, seed=2)
    est = [r["estimate"] for r in rep.rows]
    assert est == sorted(est, reverse=True)
    # one step: Q[eps_1 >= 0] = 1/2 for the symmetric two-point law
    assert abs(est[0] - 0.5) <= 5 * math.sqrt(0.25 / 5000)
    with pytest.raises(ValueError):
        ex.verify_sqrt_tail(TP, [4], 100)
    with pytest.raises(ValueError):
        ex.verify_sqrt_tail(TP, [4, 2], 100)


def test_existence_report():
    rep = ex.valley_existence(TP, 10**4, 6, seed=1)
    assert len(rep.rows) == 6 and 0.0 <= rep.summary["rate"] <= 1.0
    for row in rep.rows:
        if row["exists"]:
            assert row["m_prime"] <= 0 <= row["m_right"]


def test_calibrate_c0_root():
    tails = [np.array([4.0, 2.0, 1.0, 0.5, 0.0]), np.array([2.0, 1.0, 0.0])]
    beta = 0.5
    c0, c_tilde = ex.calibrate_c0(tails, beta)
    assert c_tilde == pytest.approx(64 * c0 ** 2 / (1 - beta) ** 2)
    mean_e = lambda c: np.mean([ex._tail_at(t, c) for t in tails])
    assert mean_e(c_tilde) <= (1 - beta) / 16 < mean_e(c_tilde - 1)
    assert ex.calibrate_c0([np.array([0.0])], beta) == ((1 - beta) / 8, 1.0)
    with pytest.raises(ValueError):
        ex.calibrate_c0([None], beta)


def test_off_core_profile_matches_direct_sum():
    bv, tail = ex._off_core_profile((TP, 7, 10**4, 64.0))
    env = Environment(TP, 7)
    assert bv == find_basic_valley(env, 10**4)
    for c in (1.0, 16.0, 63.5, 600.0):
        assert ex._tail_at(tail, c) == pytest.approx(off_core_expectation(env, bv, c), rel=1e-10, abs=1e-300)


def test_good_env_replicas_floor():
    with pytest.raises(ValueError):
        ex.verify_good_env_rate(TP, 10**4, 0.5, 99)


def test_inclusion_violations():
    fld = LocalTimeField(0, np.array([1, 1, 8, 1, 1, 0, 0, 0, 0, 0, 0, 4]), 16)
    assert ex.inclusion_violations(fld, [0, 1, 2]) == 0


def test_probe_reports_shapes():
    camp = small_campaign()
    rows = ex.run_campaign(camp)
    beta = ex.probe_beta_scaling(small_campaign(betas=[0.5, 0.75, 0.875, 0.9375]))
    assert "slope" in beta.summary and len(beta.summary["medians"]) == 4
    with pytest.raises(ValueError):
        ex.probe_beta_scaling(small_campaign(betas=[0.5, 0.75, 0.875]))
    zo = ex.probe_zero_one(camp, rows)
    assert zo.passed is None
    fav = ex.probe_favorite_sites(camp, rows, trajectories=20, n_check=200)
    assert fav.summary["violations"] >= 0
