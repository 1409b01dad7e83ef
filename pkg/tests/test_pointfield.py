import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab import pointfield
from trafficlab.distributions import Deterministic, Exponential, ParameterError, Uniform
from trafficlab.pointfield import PointConfiguration
from trafficlab.stats import ks_test

from .conftest import make_rng


def test_zero_intensity_is_empty(rng):
    assert len(pointfield.sample_poisson(0.0, (0.0, 10.0), rng)) == 0


def test_poisson_void_probability():
    rng = make_rng(1)
    n = 100_000
    # counts in [0, 1] for rho = 1; vectorized over replicas through one long window
    counts = np.array([len(pointfield.sample_poisson(1.0, (0.0, 1.0), rng)) for _ in range(n)])
    p0 = np.mean(counts == 0)
    assert abs(p0 - math.exp(-1)) <= 3 * math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / n)


def test_poisson_moments():
    rng = make_rng(2)
    counts = np.array([len(pointfield.sample_poisson(2.0, (0.0, 5.0), rng)) for _ in range(20_000)])
    n = counts.size
    assert abs(counts.mean() - 10) <= 3 * math.sqrt(10 / n)
    # variance of the sample variance of a Poisson(10): (mu4 - sigma^4 (n-3)/(n-1)) / n, mu4 = 3*100 + 10
    se_var = math.sqrt((310 - 100 * (n - 3) / (n - 1)) / n)
    assert abs(counts.var(ddof=1) - 10) <= 3 * se_var


def test_poisson_disjoint_counts_uncorrelated():
    rng = make_rng(3)
    c = np.array([[pointfield.sample_poisson(1.0, (0.0, 4.0), rng).count_in(a, a + 1) for a in range(4)]
                  for _ in range(10_000)])
    r = np.corrcoef(c.T)
    off = r[np.triu_indices(4, 1)]
    assert np.all(np.abs(off) < 3 / math.sqrt(c.shape[0]))


def test_negative_rho_rejected(rng):
    with pytest.raises(ParameterError):
        pointfield.sample_poisson(-1.0, (0.0, 1.0), rng)


@pytest.mark.parametrize("gap", [lambda: Exponential(0.0), lambda: Deterministic(math.inf),
                                 lambda: Deterministic(0.0)])
def test_degenerate_gaps_rejected(gap, rng):
    with pytest.raises(ParameterError):
        pointfield.sample_stationary_renewal(gap(), (0.0, 10.0), rng)


def _first_delays(gap, n, seed, a=0.0, b=100.0):
    rng = make_rng(seed)
    return np.array([pointfield.sample_stationary_renewal(gap, (a, b), rng).positions[0] - a for _ in range(n)])


def test_exponential_renewal_first_delay():
    d = _first_delays(Exponential(2.0), 5000, 4)
    assert ks_test(d, lambda x: 1 - np.exp(-2.0 * np.asarray(x)))[1] > 0.01


def test_deterministic_renewal_first_delay_uniform():
    d = _first_delays(Deterministic(0.5), 5000, 5)
    assert d.max() <= 0.5
    assert ks_test(d, lambda x: np.clip(np.asarray(x) / 0.5, 0, 1))[1] > 0.01


def _delay_cdf_by_quadrature(G):
    # independent target: integrate rho (1 - G(s)) on a fine grid, then interpolate
    s = np.linspace(0.0, G.quantile(1 - 1e-15) + 1e-9, 20001)
    f = (1.0 - np.asarray(G.cdf(s), dtype=float)) / G.mean
    F = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])
    return lambda x: np.interp(x, s, F, right=1.0)


def test_uniform_renewal_first_delay_10k():
    G = Uniform(0.0, 2.0)
    d = _first_delays(G, 10_000, 6)
    assert ks_test(d, _delay_cdf_by_quadrature(G))[1] > 0.01


def test_stationarity_in_window():
    # first point after s has the same law for two values of s
    G = Uniform(0.5, 1.5)
    rng = make_rng(7)
    after = {5.0: [], 37.0: []}
    for _ in range(4000):
        p = pointfield.sample_stationary_renewal(G, (0.0, 60.0), rng).positions
        for s in after:
            after[s].append(p[np.searchsorted(p, s)] - s)
    target = _delay_cdf_by_quadrature(G)
    for s, v in after.items():
        assert ks_test(v, target)[1] > 0.01


def test_alternating_deterministic():
    cfg = pointfield.sample_alternating(Deterministic(1.0), Deterministic(2.0), (0.0, 9.0), make_rng(0))
    np.testing.assert_allclose(cfg.positions, [1, 3, 4, 6, 7, 9])


def test_alternating_equal_laws_is_renewal():
    cfg = pointfield.sample_alternating(Exponential(1.0), Exponential(1.0), (0.0, 5000.0), make_rng(8))
    assert ks_test(cfg.gaps, lambda x: 1 - np.exp(-np.asarray(x)))[1] > 0.01


def test_alternating_density():
    cfg = pointfield.sample_alternating(Deterministic(5.0), Exponential(1.0), (0.0, 1e4), make_rng(9), stationary=True)
    # one car is one (a, b) pair of gaps, so cars per unit length -> 1 / (m_a + m_b)
    assert len(cfg) / 2 / 1e4 == pytest.approx(1 / 6, rel=0.02)


def test_marks():
    rng = make_rng(10)
    empty = pointfield.attach_marks(PointConfiguration(np.empty(0), (0.0, 1.0)), Exponential(1.0), rng)
    assert len(empty) == 0 and empty.marks.size == 0
    cfg = pointfield.sample_poisson(1.0, (0.0, 10.0), rng)
    const = pointfield.attach_marks(cfg, Deterministic(3.0), rng)
    assert np.all(const.marks == 3.0)
    with pytest.raises(pointfield.UsageError):
        pointfield.attach_marks(const, Deterministic(1.0), rng)
    big = pointfield.attach_marks(pointfield.sample_poisson(1.0, (0.0, 1e5), rng), Exponential(1.0), rng)
    n = len(big)
    assert abs(big.marks.mean() - 1.0) <= 3 / math.sqrt(n)
    # no tolerance is pinned for the independence check; 4 std-errors keeps false alarms near 1e-4
    assert abs(np.corrcoef(big.positions, big.marks)[0, 1]) <= 4 / math.sqrt(n)


def test_forward_recurrence():
    rng = make_rng(11)
    s = pointfield.forward_recurrence_samples(Exponential(1.0), 50.0, 10_000, rng)
    assert ks_test(s, lambda x: 1 - np.exp(-np.asarray(x)))[1] > 0.01
    d = pointfield.forward_recurrence_samples(Deterministic(1.0), 50.0, 1000, rng)
    assert np.all((d >= 0) & (d <= 1))
    G = Uniform(0.5, 1.5)
    u = pointfield.forward_recurrence_samples(G, 100.0, 10_000, rng)
    assert ks_test(u, _delay_cdf_by_quadrature(G))[1] > 0.01


@given(st.integers(0, 2**32), st.floats(0.1, 5.0), st.floats(1.0, 50.0))
@settings(max_examples=40, deadline=None)
def test_positions_strictly_increasing_and_reproducible(seed, rho, length):
    a = pointfield.sample_stationary_renewal(Uniform(0.0, 2.0 / rho), (0.0, length), make_rng(seed))
    b = pointfield.sample_stationary_renewal(Uniform(0.0, 2.0 / rho), (0.0, length), make_rng(seed))
    assert np.all(np.diff(a.positions) > 0)
    assert a.positions.tobytes() == b.positions.tobytes()
    c = pointfield.sample_poisson(rho, (0.0, length), make_rng(seed))
    assert np.all(np.diff(c.positions) > 0) and np.all((c.positions >= 0) & (c.positions <= length))


def test_csv_round_trip(rng):
    cfg = pointfield.attach_marks(pointfield.sample_poisson(1.0, (0.0, 20.0), rng), Exponential(1.0), rng)
    back = PointConfiguration.from_csv(cfg.to_csv())
    assert back.positions.tobytes() == cfg.positions.tobytes() and back.window == cfg.window
    assert back.marks.tobytes() == cfg.marks.tobytes()


def test_invalid_configurations():
    with pytest.raises(ValueError):
        PointConfiguration(np.array([1.0, 0.5]), (0.0, 2.0))
    with pytest.raises(ValueError):
        PointConfiguration(np.array([3.0]), (0.0, 2.0))
