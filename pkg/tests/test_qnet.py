import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab import qnet
from trafficlab.distributions import ParameterError
from trafficlab.stats import tv_distance

from .conftest import make_rng


def _random_stochastic(n, rng, density=1.0):
    P = rng.random((n, n)) * (rng.random((n, n)) < density)
    # a cycle through all nodes keeps the support strongly connected
    for i in range(n):
        P[i, (i + 1) % n] += 0.1
    return P / P.sum(axis=1, keepdims=True)


def _brute_Z(r, M):
    return sum(math.prod(ri**k for ri, k in zip(r, s)) for s in qnet.enumerate_states(len(r), M))


# --- traffic equations --------------------------------------------------------

def test_closed_traffic_examples():
    sol = qnet.solve_traffic_closed([[0, 1], [1, 0]])
    np.testing.assert_allclose(sol.pi, [0.5, 0.5])
    rng = make_rng(1)
    A = rng.random((5, 5))
    # Sinkhorn to a doubly stochastic matrix
    for _ in range(500):
        A /= A.sum(axis=1, keepdims=True)
        A /= A.sum(axis=0, keepdims=True)
    A /= A.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(qnet.solve_traffic_closed(A).rho, np.ones(5), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_closed_traffic_residual(seed):
    P = _random_stochastic(6, make_rng(seed), density=0.6)
    sol = qnet.solve_traffic_closed(P)
    assert np.max(np.abs(sol.rho @ P - sol.rho)) / np.max(np.abs(sol.rho)) < 1e-12
    assert sol.rho.max() == 1.0 and np.all(sol.rho > 0)


def test_reducible_routing_rejected():
    with pytest.raises(qnet.StructuralError):
        qnet.solve_traffic_closed(np.eye(2))
    with pytest.raises(qnet.StructuralError):
        qnet.NetworkSpec(np.eye(3), 1.0)


def test_open_traffic_examples():
    np.testing.assert_allclose(qnet.solve_traffic_open([0.3], [[0.0]]).rho, [0.3])
    np.testing.assert_allclose(qnet.solve_traffic_open([0.3, 0.0], [[0, 1], [0, 0]]).rho, [0.3, 0.3])
    with pytest.raises(qnet.StructuralError):
        qnet.solve_traffic_open([0.3, 0.0], [[0, 1], [1, 0]])


@pytest.mark.parametrize("seed", range(5))
def test_open_traffic_matches_series(seed):
    rng = make_rng(100 + seed)
    P = rng.random((5, 5))
    # row sums 0.7 keep 100 series terms accurate well below 1e-10
    P *= (0.7 / P.sum(axis=1))[:, None]
    lam = rng.random(5)
    sol = qnet.solve_traffic_open(lam, P)
    assert np.max(np.abs(qnet.neumann_series(lam, P, 100) - sol.rho)) <= 1e-10
    assert sol.residual < 1e-12


# --- partition functions ------------------------------------------------------

def test_partition_examples():
    assert qnet.partition_function([2.0, 1.0], 2) == pytest.approx(7.0, rel=1e-15)
    for N, M in [(1, 5), (3, 4), (5, 10)]:
        assert qnet.partition_function(np.ones(N), M) == pytest.approx(math.comb(M + N - 1, N - 1), rel=1e-13)


@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(0, 12))
@settings(max_examples=40, deadline=None)
def test_partition_matches_enumeration(seed, N, M):
    r = make_rng(seed).random(N)
    brute = _brute_Z(r, M)
    assert qnet.partition_function(r, M) == pytest.approx(brute, rel=1e-12, abs=1e-300)


def test_partition_log_space_for_large_M():
    r = np.array([1.0, 0.5, 0.25])
    # geometric sum closed form for three nodes: dominated by the r = 1 node
    lz = qnet.partition_function(r, 5000, log=True)
    exact = sum(0.5**a * 0.25**b for a in range(200) for b in range(200))
    assert lz == pytest.approx(math.log(exact), abs=1e-10)
    big = qnet.partition_function(np.full(4, 3.0), 2000, log=True)
    assert big == pytest.approx(2000 * math.log(3.0) + math.log(math.comb(2003, 3)), rel=1e-12)


def test_enumerate_states():
    s = qnet.enumerate_states(3, 4)
    assert len(s) == math.comb(6, 2) and np.all(s.sum(axis=1) == 4)
    assert len({tuple(x) for x in s}) == len(s)


# --- stationary laws ----------------------------------------------------------

def _two_node(mu):
    return qnet.NetworkSpec([[0, 1], [1, 0]], mu)


def test_closed_law_examples():
    st1 = qnet.stationary_closed(_two_node((1.0, 1.0)), 1)
    assert st1.prob([1, 0]) == pytest.approx(0.5) and st1.prob([0, 1]) == pytest.approx(0.5)
    # rho = (1, 1), mu = (1/2, 1) gives loads r = (2, 1)
    law = qnet.stationary_closed(_two_node((0.5, 1.0)), 2)
    assert [law.prob(s) for s in ([2, 0], [1, 1], [0, 2])] == pytest.approx([4 / 7, 2 / 7, 1 / 7], rel=1e-14)
    assert law.Z == pytest.approx(7.0)


@pytest.mark.parametrize("seed", range(6))
def test_global_balance(seed):
    rng = make_rng(200 + seed)
    N = int(rng.integers(2, 5))
    M = int(rng.integers(1, 7))
    spec = qnet.NetworkSpec(_random_stochastic(N, rng), tuple(rng.uniform(0.5, 2.0, N)))
    law = qnet.stationary_closed(spec, M)
    states, Q = qnet.generator_closed(spec, M)
    np.testing.assert_array_equal(states, law.states)
    assert np.max(np.abs(law.probs @ Q)) < 1e-10
    assert abs(law.means.sum() - M) < 1e-10
    assert abs(law.probs.sum() - 1) < 1e-12


def test_general_rates_path_matches_generator():
    P = _random_stochastic(3, make_rng(7))
    spec = qnet.NetworkSpec(P, ([1.0, 2.0, 3.0], 1.5, [0.5, 0.8]))
    law = qnet.stationary_closed(spec, 5)
    states, Q = qnet.generator_closed(spec, 5)
    pi = qnet.stationary_from_generator(Q)
    assert tv_distance(pi, law.probs) < 1e-10
    np.testing.assert_allclose(law.means, pi @ states, atol=1e-10)


def test_constant_rate_means_match_general_path():
    P = _random_stochastic(4, make_rng(8))
    mu = (1.0, 0.7, 1.3, 2.0)
    a = qnet.stationary_closed(qnet.NetworkSpec(P, mu), 9)
    # the same rates written as one-entry tables of length 2 take the convolution-of-factors path
    b = qnet.stationary_closed(qnet.NetworkSpec(P, tuple([m, m] for m in mu)), 9)
    assert b.loads is None and a.loads is not None
    np.testing.assert_allclose(a.means, b.means, rtol=1e-11)
    np.testing.assert_allclose(a.marginals, b.marginals, atol=1e-13)


def test_infinite_server_factor():
    # mu(n) = n nu: the general path weights a node by rho^n / (n! nu^n)
    nu = 0.5
    spec = qnet.NetworkSpec([[0, 1], [1, 0]], (1.0, [nu * n for n in range(1, 8)]))
    law = qnet.stationary_closed(spec, 6)
    w = np.array([1.0 ** (6 - k) * (1 / nu) ** k / math.factorial(k) for k in range(7)])
    np.testing.assert_allclose(law.marginals[1], w / w.sum(), rtol=1e-12)


def test_open_product_form():
    one = qnet.stationary_open(qnet.NetworkSpec([[0.0]], (1.0,), [0.3]))
    assert one.ergodic and one.means[0] == pytest.approx(3 / 7)
    np.testing.assert_allclose(one.marginal(0, [0, 1, 2]), [0.7, 0.21, 0.063])
    hot = qnet.stationary_open(qnet.NetworkSpec([[0, 1], [0, 0]], (1.0, 0.3), [0.3, 0.0]))
    assert not hot.ergodic and hot.unstable_nodes == (1,) and "node(s) 2" in hot.report()
    with pytest.raises(qnet.UnsupportedConfiguration):
        hot.pmf([0, 0])


def test_open_truncated_generator():
    spec = qnet.NetworkSpec([[0, 1], [0, 0]], (1.0, 0.5), [0.3, 0.0])
    states, Q = qnet.generator_open_truncated(spec, 40)
    pi = qnet.stationary_from_generator(Q)
    law = qnet.stationary_open(spec)
    pf = np.array([law.pmf(s) for s in states])
    assert tv_distance(pi, pf) < 1e-6


def test_open_structure_checks():
    with pytest.raises(qnet.StructuralError):
        qnet.NetworkSpec([[0.5]], (1.0,))  # leaks but nothing enters
    with pytest.raises(qnet.StructuralError):
        qnet.NetworkSpec([[0, 1, 0], [0, 0, 0], [0, 0, 1]], 1.0, [1.0, 0, 0])  # node 3 cannot leave
    with pytest.raises(qnet.UnsupportedConfiguration):
        qnet.stationary_open(qnet.NetworkSpec([[0.0]], ([1.0, 2.0],), [0.3]))
    with pytest.raises(ParameterError):
        qnet.NetworkSpec([[0.6, 0.6], [0, 0]], 1.0, [1, 0])
    with pytest.raises(ParameterError):
        qnet.NetworkSpec([[0.0]], (-1.0,), [0.3])


# --- simulation and estimation --------------------------------------------------

def test_frozen_and_symmetric_closed_runs():
    spec = _two_node((1.0, 1.0))
    frozen = qnet.simulate_ctmc(spec, 10.0, make_rng(0), M=0)
    assert frozen.events == 0 and frozen.jumps.sum() == 0
    run = qnet.simulate_ctmc(spec, 1e5, make_rng(1), M=1)
    frac = run.occupation[0, 1]
    # one car alternates with exponential(1) holding times: each sojourn is one sample
    se = math.sqrt(0.25 * 2 / run.events)
    assert abs(frac - 0.5) <= 3 * se


def test_simulated_closed_law_matches_product_form():
    rng = make_rng(3)
    P = _random_stochastic(3, rng)
    spec = qnet.NetworkSpec(P, tuple(rng.uniform(0.5, 1.5, 3)))
    law = qnet.stationary_closed(spec, 4)
    run = qnet.simulate_ctmc(spec, math.inf, rng, M=4, joint_cap=4, max_events=10**7)
    J = run.joint_law()
    emp = np.array([J[tuple(s)] for s in law.states])
    assert tv_distance(emp, law.probs) < 0.01


def test_simulated_open_single_node():
    spec = qnet.NetworkSpec([[0.0]], (1.0,), [0.3])
    run = qnet.simulate_ctmc(spec, 1e6, make_rng(4), occ_cap=60)
    target = 0.7 * 0.3 ** np.arange(61)
    target[-1] = 0.3**60
    assert tv_distance(run.occupation[0], target) < 0.01


def test_open_nodes_independent():
    from scipy.stats import chi2_contingency

    # snapshots 40 time units apart are close to independent draws of the joint law
    spec = qnet.NetworkSpec([[0, 1], [0, 0]], (1.0, 0.8), [0.3, 0.0])
    rng = make_rng(5)
    state = np.zeros(2, dtype=np.int64)
    snaps = []
    for _ in range(3000):
        state = qnet.simulate_ctmc(spec, 40.0, rng, initial=state, occ_cap=5).final_state
        snaps.append(np.minimum(state, 3))
    snaps = np.array(snaps)
    table = np.zeros((4, 4))
    np.add.at(table, (snaps[:, 0], snaps[:, 1]), 1)
    assert chi2_contingency(table)[1] > 0.01


def test_estimate_examples():
    J = np.zeros((4, 4))
    J[1, 2], J[1, 3] = 30, 70
    est = qnet.estimate_parameters(J, 100.0)
    assert est.P_hat[0, 1] == pytest.approx(0.3) and est.P_hat[0, 2] == pytest.approx(0.7)
    assert est.mu_hat[0] == pytest.approx(1.0)
    assert est.unidentifiable == (1, 2) and np.all(np.isnan(est.P_hat[1]))


def test_estimates_recover_routing():
    P = _random_stochastic(3, make_rng(9))
    spec = qnet.NetworkSpec(P, (1.0, 1.2, 0.8))
    run = qnet.simulate_ctmc(spec, 1e5, make_rng(10), M=60)
    est = qnet.estimate_parameters(run.jumps, run.T, run.busy_time)
    assert np.max(np.abs(est.P_hat - P)) < 0.02
    np.testing.assert_allclose(est.mu_hat_busy, [1.0, 1.2, 0.8], rtol=0.02)


def test_network_file_round_trip(tmp_path):
    spec = qnet.NetworkSpec([[0, 0.5], [0, 0]], (1.0, [1.0, 2.0]), [0.2, 0.1])
    text = json.dumps(spec.to_dict())
    back = qnet.load_network(text)
    np.testing.assert_array_equal(back.P, spec.P)
    assert all(np.array_equal(a, b) for a, b in zip(back.mu, spec.mu))
    path = tmp_path / "net.json"
    path.write_text(text)
    np.testing.assert_array_equal(qnet.load_network(str(path)).lambda_ext, spec.lambda_ext)
    with pytest.raises(ParameterError):
        qnet.NetworkSpec.from_dict({**spec.to_dict(), "colour": "red"})
