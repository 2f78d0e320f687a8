import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import constant_env
from sinaiwalk.env_model import EnvDistribution, Environment
from sinaiwalk.exact_chain import (expected_local_time, expected_local_times, hit_prob,
                                   log_hit_prob, oracle_expected_local_time, oracle_hit_prob,
                                   sandwich_bounds, sandwich_holds, wald_bound)

LOG_7_3 = 0.847297860387203613710107506521
WALD_5_5 = 0.539055710984088280067382351033  # (5 + L) / (10 + L), L = log(7/3)

LAWS = [EnvDistribution.two_point(0.3), EnvDistribution.uniform(0.3)]


def _random_env(rng, law):
    return Environment(law, int(rng.integers(0, 2**63)), (-80, 80))


def test_gamblers_ruin_symmetric():
    env = constant_env(0.5)
    assert hit_prob(env, 0, 3, 10) == pytest.approx(0.3, abs=1e-15)
    assert hit_prob(env, 0, 3, 10, "below") == pytest.approx(0.7, abs=1e-15)


def test_gamblers_ruin_biased():
    # alpha = 0.3: r = beta/alpha = 7/3, P_x[T_b < T_a] = (r^x - 1)/(r^b - 1) on [0, b]
    env = constant_env(0.3)
    r = 7.0 / 3.0
    for x in range(0, 6):
        assert hit_prob(env, 0, x, 5) == pytest.approx((r ** x - 1) / (r ** 5 - 1), rel=1e-13)


def test_boundary_values():
    env = constant_env(0.4)
    assert hit_prob(env, -2, -2, 3) == 0.0
    assert hit_prob(env, -2, 3, 3) == 1.0
    assert hit_prob(env, -2, -2, 3, "below") == 1.0
    with pytest.raises(ValueError):
        hit_prob(env, 2, 1, 5)
    with pytest.raises(ValueError):
        hit_prob(env, 3, 3, 3)


def test_printed_second_form_is_shifted():
    """The complementary formula written with weights referenced to ``S_b``
    sums over ``[x+1, b]``; it matches the linear solve only after the shift
    to ``[x, b-1]``."""
    rng = np.random.default_rng(5)
    env = _random_env(rng, LAWS[1])
    a, x, b = -4, 1, 6
    s = env.potential_values(a, b)
    oracle = 1.0 - oracle_hit_prob(env, a, x, b)

    def below(js):
        w = np.exp(s[js - a] - s[b - a])
        return w.sum() / np.exp(s[np.arange(a, b) - a] - s[b - a]).sum()

    literal = below(np.arange(x + 1, b + 1))
    shifted = below(np.arange(x, b))
    assert shifted == pytest.approx(oracle, rel=1e-12)
    assert abs(literal - oracle) > 1e-3


@pytest.mark.parametrize("law", LAWS, ids=["two_point", "uniform"])
def test_hit_prob_matches_oracle(law):
    rng = np.random.default_rng(11)
    for _ in range(300):
        env = _random_env(rng, law)
        a = int(rng.integers(-30, 0))
        b = a + int(rng.integers(2, 41))
        x = int(rng.integers(a, b + 1))
        assert abs(hit_prob(env, a, x, b) - oracle_hit_prob(env, a, x, b)) <= 1e-10


@pytest.mark.parametrize("law", LAWS, ids=["two_point", "uniform"])
def test_local_time_matches_oracle(law):
    rng = np.random.default_rng(12)
    for _ in range(300):
        env = _random_env(rng, law)
        i = int(rng.integers(-20, 21))
        x = i + int(rng.choice([-1, 1])) * int(rng.integers(1, 31))
        cf, orc = expected_local_time(env, i, x), oracle_expected_local_time(env, i, x)
        assert cf == pytest.approx(orc, rel=1e-9)


@pytest.mark.parametrize("alpha, x", [(0.3, 2), (0.7, -2)])
def test_local_time_pinned(alpha, x):
    env = constant_env(alpha)
    assert expected_local_time(env, 0, x) == pytest.approx(9.0 / 49.0, rel=1e-13)
    assert oracle_expected_local_time(env, 0, x) == pytest.approx(9.0 / 49.0, rel=1e-12)


def test_local_time_symmetric_walk():
    env = constant_env(0.5)
    for x in (-7, -1, 1, 2, 9):
        assert expected_local_time(env, 0, x) == pytest.approx(1.0, rel=1e-13)


def test_local_time_closed_ratio():
    # E_i[L(x, T_i)] = alpha_i / alpha_x * exp(-(S_x - S_i)) on both sides of i
    env = Environment(LAWS[1], 77)
    s = env.potential_values(-30, 30)
    for x in (-25, -3, 4, 28):
        expect = env.alpha(2) / env.alpha(x) * math.exp(-(s[x + 30] - s[32]))
        assert expected_local_time(env, 2, x) == pytest.approx(expect, rel=1e-11)


def test_vectorised_local_times():
    env = Environment(LAWS[0], 31)
    xs = np.array([-40, -12, -1, 1, 3, 17, 40])
    vec = expected_local_times(env, 0, xs)
    assert np.allclose(vec, [expected_local_time(env, 0, int(x)) for x in xs], rtol=1e-12, atol=0)
    with pytest.raises(ValueError):
        expected_local_times(env, 0, [0, 1])


def test_local_time_requires_distinct_sites():
    with pytest.raises(ValueError):
        expected_local_time(constant_env(0.5), 3, 3)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**63), a=st.integers(-30, 0), length=st.integers(2, 40),
       frac=st.floats(0, 1))
def test_complementarity(seed, a, length, frac):
    env = Environment(LAWS[1], seed, (-80, 80))
    b = a + length
    x = a + int(round(frac * length))
    assert hit_prob(env, a, x, b, "above") + hit_prob(env, a, x, b, "below") == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63), length=st.integers(2, 40))
def test_monotone_in_start(seed, length):
    env = Environment(LAWS[0], seed, (-80, 80))
    p = [hit_prob(env, 0, x, length) for x in range(length + 1)]
    assert all(q < r for q, r in zip(p, p[1:]))


@settings(max_examples=40, deadline=None)
@given(drift=st.floats(0.5, 10.0), sign=st.sampled_from([-1.0, 1.0]))
def test_no_overflow_large_potential(drift, sign):
    # a straight potential reaching |S| of 600 over the interval
    length = int(math.ceil(600.0 / drift))
    alpha = 1.0 / (1.0 + math.exp(sign * drift))
    env = Environment.from_array(np.full(length + 3, alpha), lo=-1)
    for x in (1, length // 2, length - 1):
        p = hit_prob(env, 0, x, length)
        lp = log_hit_prob(env, 0, x, length)
        assert 0.0 <= p <= 1.0 and math.isfinite(lp) and lp <= 0.0
        assert math.isclose(p, math.exp(lp), rel_tol=1e-9, abs_tol=1e-300)
    assert math.isfinite(expected_local_time(env, 0, min(length, 500)))


def test_sandwich_examples():
    lo, val, up = sandwich_bounds(constant_env(0.3), 0, 2)
    base = 9.0 / 49.0
    assert lo == pytest.approx(3.0 / 7.0 * base) and val == pytest.approx(base)
    assert up == pytest.approx(10.0 / 3.0 * base)
    assert sandwich_holds(lo, val, up)
    # a flat potential with eta0 just below 1/2
    env = Environment.from_array(np.full(11, 0.5), lo=-5, eta0=0.5 - 1e-12)
    lo, val, up = sandwich_bounds(env, 0, 2)
    assert (lo, val, up) == pytest.approx((1.0, 1.0, 2.0), rel=1e-10)
    with pytest.raises(ValueError):
        sandwich_bounds(env, 1, 1)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**63), m=st.integers(-20, 20), d=st.integers(-20, 20),
       law=st.sampled_from(LAWS))
def test_sandwich_holds(seed, m, d, law):
    if d == 0:
        d = 1
    env = Environment(law, seed)
    assert sandwich_holds(*sandwich_bounds(env, m, m + d))


def test_wald_bound_values():
    assert wald_bound(5, 5, 0.3) == pytest.approx((WALD_5_5, WALD_5_5), rel=1e-14)
    assert math.log(0.7 / 0.3) == pytest.approx(LOG_7_3, rel=1e-15)
    lam = LOG_7_3
    first, second = wald_bound(2.0, 3.0, 0.3)
    assert first + second == pytest.approx((5 + 2 * lam) / (5 + lam))
    assert wald_bound(1e9, 1.0, 0.3)[0] < 1e-8
    for bad in [(0, 1, 0.3), (1, -1, 0.3), (1, 1, 0.5)]:
        with pytest.raises(ValueError):
            wald_bound(*bad)


def test_oracle_size_caps():
    env = constant_env(0.5, -20_000, 20_000)
    with pytest.raises(ValueError):
        oracle_hit_prob(env, -10_001, 0, 10)
    with pytest.raises(ValueError):
        oracle_expected_local_time(env, 0, 1001)
