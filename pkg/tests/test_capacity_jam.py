import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficlab import capacity_jam as cj
from trafficlab.distributions import Exponential, ParameterError, Uniform

from .conftest import make_rng


def test_flow_density_examples():
    assert cj.flow_density(cj.CarGeometry(5.0), 12.0) == pytest.approx(0.2)
    g = cj.CarGeometry(5.0, headway=cj.linear_headway(1.5))
    assert cj.flow_density(g, 30.0) == pytest.approx(0.02)
    g2 = cj.CarGeometry(5.0, headway=cj.linear_headway(1.5), lanes=2)
    assert cj.flow_density(g2, 30.0) == pytest.approx(2 * cj.flow_density(g, 30.0))


def test_capacity_examples():
    J, v = cj.road_capacity(cj.CarGeometry(5.0, headway=cj.linear_headway(1.5)), 0.0, 30.0)
    assert J == pytest.approx(0.6, abs=1e-12) and v == pytest.approx(30.0)
    J, v = cj.road_capacity(cj.CarGeometry(1.0, headway=lambda v: np.asarray(v) ** 2), 0.0, 10.0)
    assert J == pytest.approx(0.5, abs=1e-12) and v == pytest.approx(1.0, abs=1e-6)
    g = cj.CarGeometry(2.0, headway=cj.linear_headway(1.0))
    J, v = cj.road_capacity(g, 3.0, 3.0)
    assert J == pytest.approx(3.0 / 5.0, rel=1e-15) and v == 3.0
    with pytest.raises(ParameterError):
        cj.road_capacity(g, 4.0, 3.0)


@given(st.floats(0.5, 5.0), st.floats(0.1, 3.0), st.floats(0.0, 2.0))
@settings(max_examples=40, deadline=None)
def test_capacity_is_local_max(d, a, p):
    # D+(v) = a v^2 + p gives an interior optimum at sqrt((d + p) / a)
    g = cj.CarGeometry(d, headway=lambda v: a * np.asarray(v, dtype=float) ** 2 + p)
    J, v = cj.road_capacity(g, 0.0, 20.0)
    step = 20.0 / 10_000
    cur = lambda x: x / (d + a * x * x + p)
    assert J >= cur(min(v + step, 20.0)) - 1e-15 and J >= cur(max(v - step, 0.0)) - 1e-15
    v_star = min(math.sqrt((d + p) / a), 20.0)
    assert J == pytest.approx(cur(v_star), rel=1e-10)


def test_tabulated_headway_and_csv():
    h = cj.read_headway_csv("v,D\n0,1\n10,3\n20,9\n")
    assert h(5.0) == pytest.approx(2.0) and h(15.0) == pytest.approx(6.0)
    with pytest.raises(ParameterError):
        cj.read_headway_csv("speed,D\n0,1\n")


def test_growth_rate_examples():
    assert cj.jam_growth_rate(1.0, 1.0, 3.0, 1.0) == 1.0
    assert cj.jam_growth_rate(1.0, 1.0, 3.0, 0.0) == 0.0
    assert cj.jam_growth_rate(1.0, 0.5, 2.0, 2.0) == pytest.approx(2.0)
    with pytest.raises(cj.SingularityError):
        cj.jam_growth_rate(1.0, 2.0, 2.0, 1.0)


def _geom(d, d0, dplus):
    return cj.CarGeometry(d, d0, lambda v: dplus + 0.0 * np.asarray(v, dtype=float))


@pytest.mark.parametrize("d,d0,dplus,v", [(1.0, 1.0, 3.0, 1.0), (1.0, 0.5, 2.0, 2.0)])
def test_simulated_slope_converges(d, d0, dplus, v):
    target = cj.jam_growth_rate(d, d0, dplus, v)
    errs = []
    for t in (1e3, 1e4):
        tr = cj.simulate_jam(_geom(d, d0, dplus), v, t)
        errs.append(abs(float(tr.L(t)) / t - target))
    assert errs[1] / target <= 0.02 and errs[1] <= 0.5 * errs[0] + 1e-12


def test_short_horizon_is_first_car_footprint():
    tr = cj.simulate_jam(_geom(4.0, 1.0, 10.0), 1.0, 0.5)
    assert float(tr.L(0.5)) == 4.0


def test_doubling_speed_doubles_slope():
    a = cj.simulate_jam(_geom(2.0, 0.5, 3.0), 1.0, 1e4)
    b = cj.simulate_jam(_geom(2.0, 0.5, 3.0), 2.0, 1e4)
    assert float(b.L(1e4)) / float(a.L(1e4)) == pytest.approx(2.0, rel=1e-3)


def test_random_headways_follow_mean():
    # renewal headways: the slope uses the mean spacing
    g = cj.CarGeometry(4.0, 1.0)
    H = Uniform(2.0, 4.0)
    tr = cj.simulate_jam(g, 1.0, 1e4, make_rng(3), headway_dist=H)
    assert float(tr.L(1e4)) / 1e4 == pytest.approx(cj.jam_growth_rate(4.0, 1.0, H.mean, 1.0), rel=0.02)
    with pytest.raises(cj.SingularityError):
        cj.simulate_jam(g, 1.0, 10.0, make_rng(3), headway_dist=Exponential(2.0))


def test_jam_trace_monotone():
    tr = cj.simulate_jam(_geom(4.0, 1.0, 3.0), 1.5, 500.0)
    assert np.all(np.diff(tr.stop_times) > 0) and np.all(np.diff(tr.L(tr.stop_times)) > 0)
    assert tr.to_csv().startswith("t,L\n")


@given(st.floats(0.5, 5.0), st.floats(0.0, 2.0), st.floats(0.1, 5.0), st.floats(0.1, 3.0))
@settings(max_examples=50, deadline=None)
def test_growth_rate_monotonicity(d, d0, gap, v):
    dplus = d0 + gap
    base = cj.jam_growth_rate(d, d0, dplus, v)
    assert cj.jam_growth_rate(d, d0 + 0.01 * gap, dplus, v) > base
    assert cj.jam_growth_rate(d, d0, dplus + 0.1, v) < base


def test_bottleneck():
    r = cj.classify_bottleneck(0.8, 0.5)
    assert r.regime == "growing_jam" and r.growth_rate == pytest.approx(0.3)
    assert cj.classify_bottleneck(0.0, 0.7).regime == "free"
    assert cj.classify_bottleneck(0.4, 0.5).regime == "delay"
    assert cj.classify_bottleneck(0.4, 0.5, threshold=0.9).regime == "free"


def test_widening_gain():
    assert cj.widening_time_gain(100, 10, 10) == 0
    assert cj.widening_time_gain(100, 10, 20) == 5
    assert cj.widening_time_gain(100, 10, 5) < 0
    with pytest.raises(ParameterError):
        cj.widening_time_gain(100, 0, 5)
