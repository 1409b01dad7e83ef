import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab import startup_order as so
from trafficlab.distributions import ParameterError
from trafficlab.stats import ks_test, mean_se

from .conftest import make_rng


def test_rho_at_least_one_rejected(rng):
    with pytest.raises(ParameterError):
        so.simulate_startup_A(1.0, (0.0, 10.0), rng)


def test_single_car_never_stops():
    for seed in range(200):
        res = so.simulate_startup_A(0.5, (0.0, 1.0), make_rng(seed))
        if res.initial.size == 1:
            break
    assert res.initial.size == 1
    assert res.stops[0] == 0 and res.final_gaps.size == 0 and res.final_start[0] > 0


def test_final_gaps_are_poisson():
    res = so.simulate_startup_A(0.5, (0.0, 2000.0), make_rng(1))
    assert ks_test(res.final_gaps, lambda x: 1 - np.exp(-0.5 * np.asarray(x)))[1] > 0.01


def test_literal_gap_has_atom_at_zero():
    res = so.simulate_startup_A(0.5, (0.0, 2000.0), make_rng(2))
    assert np.mean(res.literal_gaps == 0.0) > 0.1
    np.testing.assert_allclose(res.final_gaps, res.literal_gaps + np.diff(res.final_start), atol=1e-9)


def test_stop_counts_do_not_drift():
    means = []
    for L in (500.0, 1000.0, 2000.0):
        m = [so.simulate_startup_A(0.5, (0.0, L), make_rng(10 + k)).stops.mean() for k in range(20)]
        means.append(mean_se(m))
    # the mean number of stops per car stays within noise as the window doubles
    for a, b in zip(means[:-1], means[1:]):
        assert abs(a.value - b.value) <= 4 * math.hypot(a.stderr, b.stderr)


def test_order_and_speed_invariants():
    res = so.simulate_startup_A(0.6, (0.0, 60.0), make_rng(3), keep_log=True)
    times = np.linspace(0.0, float(np.nanmax(res.final_start)) + 5.0, 120)
    X = np.array([[res.position(i, t) for i in range(res.initial.size)] for t in times])
    # no overtaking: front car first, strictly ahead or level
    assert np.all(np.diff(X, axis=1) <= 1e-9)
    # speeds in {0, 1}: trajectories nondecreasing and 1-Lipschitz
    dX = np.diff(X, axis=0)
    dt = np.diff(times)[:, None]
    assert np.all(dX >= -1e-12) and np.all(dX <= dt + 1e-9)


def test_model_b_lead_and_free_pair():
    res = so.simulate_startup_B(0.5, 1.0, 1.0, 1, make_rng(4))
    assert res.tau1[0] == 0.0 and res.tau2[0] == 0.0
    T, X, slope = so.follower_trajectory(np.array([0.0]), np.array([0.0]), -3.0, 1.0, 1.0)
    assert np.all(slope > 0) and T[0] == 0.0


def _pos(T, X, v, t):
    if t >= T[-1]:
        return X[-1] + v * (t - T[-1])
    return float(np.interp(t, T, X))


@given(st.integers(0, 2**32), st.floats(0.3, 2.0), st.floats(0.2, 2.0))
@settings(max_examples=25, deadline=None)
def test_model_b_threshold_rule(seed, rho, d_eff):
    res = so.simulate_startup_B(rho, 1.0, d_eff, 12, make_rng(seed))
    horizon = float(res.tau2.max()) + 2.0
    ts = np.linspace(0.0, horizon, 400)
    for k in range(1, 12):
        Tp, Xp = res.trajectories[k - 1]
        Tk, Xk = res.trajectories[k]
        for t in ts:
            gap = _pos(Tp, Xp, 1.0, t) - _pos(Tk, Xk, 1.0, t)
            assert gap >= -1e-9
            h = 1e-7
            moving = _pos(Tk, Xk, 1.0, t + h) - _pos(Tk, Xk, 1.0, t) > 0.5 * h
            if gap > d_eff + 1e-6:
                assert moving
            elif gap < d_eff - 1e-6:
                assert not moving


def test_model_b_first_start_nondecreasing_in_mean():
    reps = [so.simulate_startup_B(0.9, 1.0, 1.0, 30, make_rng(100 + k)).tau1 for k in range(300)]
    T = np.array(reps)
    m = T.mean(axis=0)
    se = T.std(axis=0, ddof=1) / math.sqrt(T.shape[0])
    for k in range(1, 29):
        assert m[k + 1] >= m[k] - 3 * math.hypot(se[k], se[k + 1])


def _spec(n, lam, rho0=1.0):
    return so.VelocityFlowSpec(n, 1.0, 2.0, 1.0, 1.0, 0.5, 3.0, lam, rho0)


def test_velocity_flow_validation():
    with pytest.raises(ParameterError):
        so.VelocityFlowSpec(3, 2.0, 1.0, 1.0, 1.0, 0.5, 3.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        so.simulate_velocity_flow(_spec(3, 1.0), 5.0, [6.0], make_rng(0))


def test_velocities_in_band_and_contacts_exact():
    spec = _spec(10, 0.0, rho0=2.0)
    for k in range(10):
        tr = so.simulate_velocity_flow(spec, 20.0, np.linspace(0.1, 20.0, 50), make_rng(k))
        assert np.all((tr.vel > spec.C1) & (tr.vel < spec.C2))
        for s in range(tr.times.size):
            order = tr.rank[s]
            v, c, x = tr.vel[s, order], tr.contact[s, order].astype(bool), tr.pos[s, order]
            c[0] = False
            assert np.all(v[1:][c[1:]] == v[:-1][c[1:]])
            assert np.all(np.diff(x) <= 1e-9)
        assert tr.overtakes == 0


def test_blocked_neighbours_positively_correlated():
    spec = _spec(6, 0.0, rho0=3.0)
    traces = [so.simulate_velocity_flow(spec, 30.0, [30.0], make_rng(200 + k)) for k in range(300)]
    e = so.covariance_estimate(traces, 1, 2)
    assert e.value > 3 * e.stderr
    var = so.covariance_estimate(traces, 1, 1)
    assert var.value >= 0


def test_free_phase_sweep_and_empty_flow():
    rows = so.phase_sweep(_spec(6, math.inf), [math.inf], 10.0, make_rng(5), replicas=200)
    lam, cov, size = rows[0]
    assert abs(cov) < 0.05
    empty = so.phase_sweep(_spec(0, 1.0), [0.0, 1.0], 5.0, make_rng(5), replicas=3)
    assert all(math.isnan(r[1]) and math.isnan(r[2]) for r in empty)
    with pytest.raises(ParameterError):
        so.phase_sweep(_spec(3, 1.0), [], 5.0, make_rng(5))


def test_cluster_sizes():
    np.testing.assert_array_equal(so.cluster_sizes([0, 1, 1, 0, 0, 1]), [3, 1, 2])
    assert so.cluster_sizes([]).size == 0


def test_velocity_flow_reproducible():
    a = so.simulate_velocity_flow(_spec(8, 0.7), 15.0, [5.0, 15.0], make_rng(9))
    b = so.simulate_velocity_flow(_spec(8, 0.7), 15.0, [5.0, 15.0], make_rng(9))
    assert a.pos.tobytes() == b.pos.tobytes() and a.vel.tobytes() == b.vel.tobytes()
    assert (a.contacts, a.overtakes, a.switches) == (b.contacts, b.overtakes, b.switches)
