import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab.distributions import (
    NO_BYPASS,
    Deterministic,
    Discrete,
    Empirical,
    Exponential,
    ParameterError,
    Uniform,
    distribution_from_dict,
)
from trafficlab.quadrature import adaptive_simpson
from trafficlab.stats import batch_means, jackknife_covariance, ks_test, mean_se, tv_distance

from .conftest import make_rng

pos = st.floats(0.05, 20.0)


def laws():
    return st.one_of(
        pos.map(Exponential),
        pos.map(Deterministic),
        st.tuples(st.floats(0.0, 5.0), pos).map(lambda t: Uniform(t[0], t[0] + t[1])),
        st.lists(pos, min_size=1, max_size=5).map(lambda a: Discrete(tuple(a), tuple([1.0 / len(a)] * len(a)))),
        st.lists(pos, min_size=1, max_size=8).map(lambda a: Empirical(tuple(a))),
    )


def _trapz_limited_mean(G, s, n=20001):
    # independent route: E min(X, s) = int_0^s (1 - G(u)) du on a fine grid
    u = np.linspace(0.0, s, n)
    f = 1.0 - np.asarray(G.cdf(u), dtype=float)
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(u)))


@given(laws(), st.floats(0.0, 30.0))
@settings(max_examples=60, deadline=None)
def test_limited_mean_matches_survival_integral(G, s):
    # step cdfs make the grid integral accurate only to a grid cell
    assert float(G.limited_mean(s)) == pytest.approx(_trapz_limited_mean(G, s), abs=5e-3 * max(s, 1.0))


@given(laws())
@settings(max_examples=60, deadline=None)
def test_equilibrium_mean_is_second_moment_over_twice_mean(G):
    # E[residual] = int_0^inf s (1 - G(s)) ds / m, by a grid on the bulk of the law
    hi = G.quantile(1.0 - 1e-13) * 1.01 + 1e-9
    s = np.linspace(0.0, hi, 40001)
    f = s * (1.0 - np.asarray(G.cdf(s), dtype=float))
    val = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(s))) / G.mean
    assert G.equilibrium_mean() == pytest.approx(val, rel=2e-3, abs=1e-6)


@given(laws(), st.floats(0.01, 0.99))
@settings(max_examples=60, deadline=None)
def test_quantile_inverts_cdf(G, p):
    q = G.quantile(p)
    assert float(G.cdf(q)) >= p - 1e-12
    assert float(G.cdf(q - 1e-9 * max(1.0, q))) <= p + 1e-12 or q == 0


@given(laws(), st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_scaling_scales_moments(G, c):
    H = G.scaled(c)
    assert H.mean == pytest.approx(c * G.mean, rel=1e-12)
    assert H.second_moment == pytest.approx(c * c * G.second_moment, rel=1e-12)


@given(laws())
@settings(max_examples=40, deadline=None)
def test_dict_round_trip(G):
    H = distribution_from_dict(G.to_dict())
    assert H.kind == G.kind and H.mean == pytest.approx(G.mean, rel=1e-15)


@pytest.mark.parametrize("G,expected", [
    (Exponential(1.0), 1.0), (Deterministic(2.0), 1.0), (Uniform(0.0, 1.0), 1.0 / 3.0),
])
def test_residual_life_means(G, expected):
    assert G.equilibrium_mean() == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("G", [Exponential(2.0), Uniform(0.5, 1.5), Discrete((1.0, 3.0), (0.25, 0.75))])
def test_samplers_follow_their_laws(G):
    rng = make_rng(5)
    x = G.sample(rng, 20000)
    assert abs(x.mean() - G.mean) < 4 * math.sqrt(G.variance / x.size)
    e = G.equilibrium_sample(rng, 20000)
    assert ks_test(e, G.equilibrium_cdf)[1] > 1e-3


def test_size_biased_discrete():
    G = Discrete((1.0, 3.0), (0.5, 0.5))
    x = G.size_biased_sample(make_rng(1), 40000)
    assert np.mean(x == 3.0) == pytest.approx(0.75, abs=0.01)


def test_no_bypass_is_infinite():
    assert math.isinf(NO_BYPASS.mean) and float(NO_BYPASS.cdf(1e300)) == 0.0


@pytest.mark.parametrize("bad", [
    {"kind": "exponential", "rate": -1}, {"kind": "uniform", "lo": 2, "hi": 1}, {"kind": "weibull"},
    {"kind": "discrete", "atoms": [1, 2], "weights": [0.5, 0.6]}, {"kind": "empirical", "sample": []},
    {"kind": "exponential", "rate": 1, "scale": 2}, "exp",
])
def test_bad_laws_rejected(bad):
    with pytest.raises(ParameterError):
        distribution_from_dict(bad)


def test_equilibrium_quantile_inverts_equilibrium_cdf():
    for G in (Exponential(1.0), Uniform(0.0, 2.0), Deterministic(1.0)):
        for p in (0.1, 0.5, 0.9):
            assert float(G.equilibrium_cdf(G.equilibrium_quantile(p))) == pytest.approx(p, abs=1e-12)


# -- quadrature and stats ---------------------------------------------------
@pytest.mark.parametrize("f,a,b,exact", [
    (math.sin, 0.0, math.pi, 2.0),
    (lambda x: math.exp(-x), 0.0, 30.0, 1.0 - math.exp(-30.0)),
    (lambda x: math.sqrt(x), 0.0, 1.0, 2.0 / 3.0),
    (lambda x: 1.0 / (1.0 - 0.999 * x), 0.0, 1.0, -math.log(0.001) / 0.999),
])
def test_adaptive_simpson(f, a, b, exact):
    assert adaptive_simpson(f, a, b, 1e-10) == pytest.approx(exact, abs=1e-9)


def test_adaptive_simpson_breakpoints():
    step = lambda x: 1.0 if x < 0.3 else 2.0
    assert adaptive_simpson(step, 0.0, 1.0, 1e-12, points=[0.3]) == pytest.approx(1.7, abs=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=40), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_jackknife_covariance_value(x, seed):
    y = make_rng(seed).normal(size=len(x))
    e = jackknife_covariance(x, y)
    assert e.value == pytest.approx(float(np.cov(x, y)[0, 1]), abs=1e-9)
    # leave-one-out values by direct recomputation
    loo = [np.cov(np.delete(x, i), np.delete(y, i))[0, 1] for i in range(len(x))]
    se = math.sqrt((len(x) - 1) / len(x) * np.sum((np.array(loo) - np.mean(loo)) ** 2))
    assert e.stderr == pytest.approx(se, rel=1e-6, abs=1e-9)


def test_tv_and_means():
    assert tv_distance([0.5, 0.5], [1.0]) == pytest.approx(0.5)
    assert tv_distance([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]) == pytest.approx(1.0)
    e = mean_se([1.0, 2.0, 3.0])
    assert e.value == 2.0 and e.stderr == pytest.approx(1.0 / math.sqrt(3.0))
    b = batch_means(np.ones(100), 10)
    assert b.value == 1.0 and b.stderr == 0.0
