import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab import grammar_flow as gf
from trafficlab.distributions import ParameterError

from .conftest import make_rng


def _rules(events):
    return sorted((r, j) for r, j, _ in events)


def test_enabled_events_examples():
    spec = gf.GrammarSpec(1.0, 1.0, 1.0, 1.0, 1.0)
    assert _rules(gf.enabled_events(gf.GrammarState("1"), spec)) == [(0, -1)]
    assert _rules(gf.enabled_events(gf.GrammarState("10", ring=True), spec)) == [(0, -1), (1, 0)]
    ev = _rules(gf.enabled_events(gf.GrammarState("120", ring=True), spec))
    assert (2, 0) in ev
    # rule 3 fires on both "22" and "21"
    assert sorted(j for r, j in _rules(gf.enabled_events(gf.GrammarState("221"), spec)) if r == 3) == [0, 1]


def _only(rule):
    rates = dict(lambda0_plus=0.0, lambda1_plus=0.0, lambda2_plus=0.0, lambda2_minus=0.0, v=0.0)
    rates[{1: "lambda0_plus", 2: "lambda1_plus", 3: "lambda2_minus", 4: "lambda2_plus"}[rule]] = 1.0
    return gf.GrammarSpec(**rates)


@pytest.mark.parametrize("word,ring,rule,after", [
    ("10", True, 1, "01"),
    ("1012", False, 1, "112"),  # "10" -> "01"; back zero trimmed
    ("22", False, 3, "202"),
    ("200", True, 4, "020"),
    ("1202", False, 2, "212"),  # "120" -> "021"; back zero trimmed
])
def test_step_applies_substitution(word, ring, rule, after, rng):
    new, (t, r, j) = gf.step(gf.GrammarState(word, 0, 0.0, ring), _only(rule), rng)
    assert r == rule and new.word == after and t > 0 and new.r == 0


def test_drift_moves_front():
    new, ev = gf.step(gf.GrammarState("12", 3, 0.0), gf.GrammarSpec(v=2.0), make_rng(0))
    assert ev[1] == 0 and new.r == 4 and new.word == "12"


def test_absorbed():
    with pytest.raises(gf.Absorbed):
        gf.step(gf.GrammarState("12"), gf.GrammarSpec(), make_rng(0))
    tr = gf.simulate(gf.GrammarState("12"), gf.GrammarSpec(), 5.0, make_rng(0))
    assert len(tr) == 0 and tr.absorbed


def test_front_zero_rejected():
    with pytest.raises(ParameterError):
        gf.GrammarState("10")
    with pytest.raises(ParameterError):
        gf.GrammarState("13")


def test_waiting_time_is_exponential_with_total_rate():
    spec = gf.GrammarSpec(1.0, 0.0, 0.0, 0.0, 0.5)
    s0 = gf.GrammarState("1010", ring=True)  # two rule-1 matches: total = 0.5 + 2
    rng = make_rng(1)
    waits = np.array([gf.step(s0, spec, rng)[1][0] for _ in range(20000)])
    assert abs(waits.mean() - 1 / 2.5) < 4 * (1 / 2.5) / math.sqrt(waits.size)


def test_kernel_simulation_matches_python_stepper():
    # the compiled run and repeated `step` consume the generator identically
    spec = gf.GrammarSpec(1.0, 0.7, 0.4, 0.3, 0.5)
    s0 = gf.GrammarState("12012021", 0, 0.0)
    tr = gf.simulate(s0, spec, 5.0, make_rng(2))
    rng = make_rng(2)
    s, events = s0, []
    while True:
        new, ev = gf.step(s, spec, rng)
        if ev[0] > 5.0:
            break
        events.append(ev)
        s = new
    assert len(events) == len(tr)
    np.testing.assert_array_equal(tr.rules, [e[1] for e in events])
    np.testing.assert_array_equal(tr.positions, [e[2] for e in events])
    # the total rate is summed in a different order, so times agree to an ulp
    np.testing.assert_allclose(tr.times, [e[0] for e in events], rtol=1e-14)
    assert tr.final.word == s.word and tr.final.r == s.r


@given(st.integers(0, 2**32), st.booleans(), st.integers(2, 6), st.integers(0, 6))
@settings(max_examples=40, deadline=None)
def test_conservation_and_order(seed, ring, n1, n2):
    rng = make_rng(seed)
    n = n1 + n2 + 6
    w = gf.ring_word(n, {"1": n1, "2": n2}, rng)
    if not ring:
        w = w.lstrip("0").rstrip("0") + "1" if w.strip("0") else "1"
    s0 = gf.GrammarState(w, 0, 0.0, ring)
    tr = gf.simulate(s0, gf.GrammarSpec(1.0, 0.8, 0.5, 0.4, 0.3), 20.0, rng, snapshot_times=np.linspace(0.5, 20, 40))
    assert np.all(np.diff(tr.times) > 0)
    for word, _ in tr.snapshots:
        assert word.count("1") == s0.n_fast and word.count("2") == s0.n_quiet
        assert ring or word[-1] != "0"
    # zeros grow only through rule 3 (free words also lose trimmed back zeros)
    if ring:
        assert tr.final.word.count("0") - w.count("0") == int(np.sum(tr.rules == 3))


def test_all_twos_without_braking():
    tr = gf.simulate(gf.GrammarState("2222"), gf.GrammarSpec(lambda2_plus=1.0, v=1.0), 10.0, make_rng(3),
                     snapshot_times=[5.0])
    assert tr.snapshots[0][0] == "2222" and tr.final.word == "2222"


@pytest.mark.parametrize("rates,r0,r2,target,tol", [
    ((1.0, 0.3, 0, 0, 0), 1.0, 0.0, 1.0, None),
    ((0.0, 1.0, 0, 0, 0), 0.5, 0.5, 1.0, 0.05),
    ((1.0, 1.0, 0, 0, 0), 0.5, 0.25, 1.0, 0.05),
])
def test_relative_velocity_examples(rates, r0, r2, target, tol):
    spec = gf.GrammarSpec(*rates)
    assert gf.relative_velocity_formula(spec, r0, r2) == pytest.approx(target)
    est = gf.relative_velocity_estimate(spec, r0, r2, 2e4, make_rng(4))
    if tol is None:
        assert abs(est.value - target) <= 3 * est.stderr or est.stderr == 0 and est.value == target
    else:
        assert abs(est.value - target) <= tol * target


def test_frozen_environment_can_trap():
    # a literal frozen ring: the fast car is stuck once a "22" block is ahead of it
    spec = gf.GrammarSpec(0.0, 1.0)
    est = gf.relative_velocity_estimate(spec, 0.5, 0.5, 200.0, make_rng(5), environment="frozen", n_cells=200)
    assert est.value < 0.5 * gf.relative_velocity_formula(spec, 0.5, 0.5)
    with pytest.raises(ParameterError):
        gf.relative_velocity_estimate(spec, 0.2, 0.5, 10.0, make_rng(5), environment="frozen")


def test_density_validation():
    with pytest.raises(ParameterError):
        gf.relative_velocity_estimate(gf.GrammarSpec(1.0), 0.7, 0.5, 10.0, make_rng(0))


@pytest.mark.parametrize("rates,expected", [
    ((1, 1, 0.3, 0), True), ((1, 2, 0, 0), False), ((1, 1, 0, 0.1), False),
])
def test_tasep_mode(rates, expected):
    assert gf.tasep_mode_check(gf.GrammarSpec(*rates)) is expected


def test_tasep_current_matches_exact_ring_value():
    # TASEP on a ring of L cells with K cars: stationary current K (L - K) / (L (L - 1))
    L, K, t_max = 12, 5, 3000.0
    word = "".join("1" if i < K else "0" for i in range(L))
    tr = gf.simulate(gf.GrammarState(word, ring=True), gf.GrammarSpec(1.0, 1.0), t_max, make_rng(6))
    J = gf.bond_current(tr, 3, t_max)
    exact = K * (L - K) / (L * (L - 1))
    assert abs(J.value - exact) <= 3.5 * J.stderr


def test_trace_csv_and_snapshots(rng):
    tr = gf.simulate(gf.GrammarState("1201"), gf.GrammarSpec(1, 1, 1, 1, 1), 3.0, rng, snapshot_times=[1.0, 2.0])
    lines = tr.to_csv().splitlines()
    assert lines[0] == "time,rule,position" and len(lines) == len(tr) + 1
    assert len(tr.snapshot_lines().splitlines()) == 2
