import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from conftest import ForcedStream, constant_env
from oracles import radius_bruteforce, walk_python
from sinaiwalk.env_model import EnvDistribution, Environment, WindowError
from sinaiwalk.walk_sim import (CHUNK, LocalTimeField, Walker, concentration_radius,
                                excursion_local_time, hitting_time, make_stream, run, stats)

UP, DOWN = 0.0, 1.0 - 1e-12

# first run of env seed 7 / walk seed 11 / n = 1000, after agreeing with the
# plain step loop below
GOLDEN_DIGEST = "1b31ec47565ca9504d9bc3c83a029a77b5279c897fd14a8eb4cb1c95e7f4fa2c"


def test_forced_up_counts_once_each():
    fld, st_ = run(constant_env(0.5, -10, 200), ForcedStream([UP]), 100)
    assert fld.lo == 1 and fld.max_site == 100
    assert np.all(fld.counts == 1) and fld.total == 100
    assert st_.position == 100 and st_.step_count == 100


def test_zero_steps_rejected():
    with pytest.raises(ValueError):
        run(constant_env(0.5), 1, 0)


def test_fixed_window_edge_raises():
    with pytest.raises(WindowError):
        run(constant_env(0.5, -5, 5), ForcedStream([UP]), 20)


def test_golden_digest_matches_plain_loop(two_point):
    env = Environment(two_point, 7)
    fld, state = run(env, 11, 1000)
    uniforms = make_stream(11).random(CHUNK)
    path = walk_python(env.alpha, uniforms, 1000)
    assert fld == LocalTimeField.from_path(path)
    assert state.position == path[-1]
    assert fld.digest() == GOLDEN_DIGEST


def test_same_seeds_same_field(uniform):
    a, _ = run(Environment(uniform, 3), 5, 20_000)
    b, _ = run(Environment(uniform, 3), 5, 20_000)
    c, _ = run(Environment(uniform, 3), 6, 20_000)
    assert a == b and hash(a) == hash(b) and a.digest() == b.digest()
    assert a != c


def test_checkpointed_run_equals_single_run(two_point):
    env = Environment(two_point, 9)
    whole, _ = run(env, 4, 3 * CHUNK + 17)
    w = Walker(Environment(two_point, 9), 4)
    for part in (5, CHUNK, 2 * CHUNK, 12):
        w.advance(part)
    assert w.field() == whole


def test_mass_and_contiguity(uniform):
    n = 50_000
    fld, state = run(Environment(uniform, 21), 8, n)
    assert fld.total == n == fld.counts.sum()
    # nearest-neighbour steps visit every site between the extremes
    assert np.all(fld.counts[1:-1] > 0)
    assert fld.min_site <= state.position <= fld.max_site
    assert sum(fld.as_dict().values()) == n
    assert fld.mass(fld.min_site - 5, fld.max_site + 5) == n


def test_parity():
    fld, state = run(constant_env(0.4, -500, 500), 2, 101)
    assert state.position % 2 == 1


def test_quenched_law_of_endpoint(two_point):
    """Empirical ``P[X_20 > 0]`` against the exact distribution of ``X_20``."""
    env = Environment(two_point, 17, (-30, 30))
    n, walks = 20, 3000
    probs = np.zeros(2 * n + 1)
    probs[n] = 1.0
    a = env.alpha_range(-n, n)
    for _ in range(n):
        up = np.zeros_like(probs)
        up[1:] += probs[:-1] * a[:-1]
        up[:-1] += probs[1:] * (1 - a[1:])
        probs = up
    exact = probs[n + 1:].sum()
    rng = np.random.default_rng(99)
    hits = sum(run(env, rng, n)[1].position > 0 for _ in range(walks))
    se = math.sqrt(exact * (1 - exact) / walks)
    assert abs(hits / walks - exact) <= 5 * se


def test_hitting_time_forced():
    env = constant_env(0.5)
    assert hitting_time(env, ForcedStream([UP, DOWN]), 0, 10) == 2
    assert hitting_time(env, ForcedStream([UP]), -3, 40) is None
    with pytest.raises(ValueError):
        hitting_time(env, 1, 1, 0)


def test_hitting_time_one_step():
    env = constant_env(0.5, -2000, 2000)
    rng = np.random.default_rng(3)
    trials = 4000
    ones = sum(hitting_time(env, rng, 1, 1) == 1 for _ in range(trials))
    assert abs(ones / trials - 0.5) <= 5 * math.sqrt(0.25 / trials)


def test_excursion_center_target():
    est = excursion_local_time(constant_env(0.3), 1, 0, {0}, 500)
    assert est.mean == 1.0 and est.stderr == 0.0 and est.complete


def test_excursion_symmetric_two_away():
    est = excursion_local_time(constant_env(0.5), 2, 0, {2}, 40_000)
    assert abs(est.mean - 1.0) <= 5 * est.stderr


def test_excursion_biased():
    est = excursion_local_time(constant_env(0.3), 3, 0, {2}, 40_000)
    assert abs(est.mean - 9.0 / 49.0) <= 5 * est.stderr


def test_excursion_budget_and_errors():
    est = excursion_local_time(constant_env(0.5), 1, 0, {30}, 10**6, max_uniforms=1000)
    assert not est.complete and est.excursions < 10**6
    with pytest.raises(ValueError):
        excursion_local_time(constant_env(0.5), 1, 0, set(), 10)
    with pytest.raises(ValueError):
        excursion_local_time(constant_env(0.5), 1, 0, {1}, 0)


def test_concentration_examples():
    fld = LocalTimeField.from_path([1, 0, 1, 0, -1])
    assert concentration_radius(fld, 0.0) == 1
    assert concentration_radius(fld, 0.99) == 1
    fld = LocalTimeField(0, np.array([5, 0, 0, 0, 0, 0, 5]), 10)
    assert concentration_radius(fld, 0.5) == 1
    assert concentration_radius(fld, 0.6) == 3
    assert concentration_radius(fld, 0.6, return_center=True) == (3, 3)
    with pytest.raises(ValueError):
        concentration_radius(fld, 1.0)


@settings(max_examples=200, deadline=None)
@given(counts=st.lists(st.integers(0, 9), min_size=1, max_size=25), lo=st.integers(-30, 30),
       beta=st.floats(0.0, 0.999))
def test_concentration_matches_scan(counts, lo, beta):
    counts = np.array(counts, dtype=np.int64)
    if counts.sum() == 0:
        counts[0] = 1
    fld = LocalTimeField(lo, counts, int(counts.sum()))
    k, x = concentration_radius(fld, beta, return_center=True)
    assert k == radius_bruteforce(counts, lo, beta)
    assert fld.mass(x - k, x + k) >= beta * fld.total


def test_concentration_monotone_in_beta(uniform):
    fld, _ = run(Environment(uniform, 4), 4, 30_000)
    radii = [concentration_radius(fld, b) for b in np.linspace(0, 0.99, 12)]
    assert radii == sorted(radii)


def test_stats_example():
    s = stats(LocalTimeField.from_path([1, 0, 1, 0, -1]))
    assert s.l_star == 2 and list(s.favorites) == [0, 1] and s.fav_spread == 1
    assert s.y_radius(0.5) == 1


def test_empty_field_rejected():
    empty = LocalTimeField(0, np.zeros(1, dtype=np.int64), 0)
    with pytest.raises(ValueError):
        stats(empty)
    with pytest.raises(ValueError):
        LocalTimeField.from_path([])
