"""Road capacity from a headway law, jam growth behind a stopped front, and
bottleneck regimes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import DistributionSpec, ParameterError

__all__ = [
    "SingularityError",
    "CarGeometry",
    "linear_headway",
    "tabulated_headway",
    "read_headway_csv",
    "flow_density",
    "road_capacity",
    "jam_growth_rate",
    "JamTrace",
    "simulate_jam",
    "BottleneckRegime",
    "classify_bottleneck",
    "widening_time_gain",
]


class SingularityError(ValueError):
    """Jam boundary would move at unbounded speed (incoming spacing <= jam spacing)."""


def linear_headway(c: float, c0: float = 0.0) -> Callable[[float], float]:
    """D+(v) = c0 + c v."""
    if c < 0 or c0 < 0:
        raise ParameterError("headway coefficients must be nonnegative")
    return lambda v: c0 + c * np.asarray(v, dtype=float)


def tabulated_headway(speeds, headways) -> Callable[[float], float]:
    """Piecewise-linear D+(v) through (speed, headway) samples."""
    s = np.asarray(speeds, dtype=float)
    h = np.asarray(headways, dtype=float)
    if s.ndim != 1 or s.shape != h.shape or s.size == 0:
        raise ParameterError("headway table must be two equal-length columns")
    order = np.argsort(s)
    s, h = s[order], h[order]
    if np.any(np.diff(s) <= 0):
        raise ParameterError("headway table speeds must be distinct")
    if np.any(h < 0) or np.any(np.diff(h) < 0):
        raise ParameterError("headway must be nonnegative and nondecreasing in speed")
    return lambda v: np.interp(v, s, h)


def read_headway_csv(text: str) -> Callable[[float], float]:
    """Parse a CSV with columns v, D (header row required)."""
    rows = [r for r in csv.DictReader(io.StringIO(text)) if r]
    try:
        return tabulated_headway([float(r["v"]) for r in rows], [float(r["D"]) for r in rows])
    except KeyError as exc:
        raise ParameterError(f"headway CSV missing column {exc}") from None


@dataclass(frozen=True)
class CarGeometry:
    """Car length d, standstill gap d0_plus, headway law D+(v), lane count."""

    d: float
    d0_plus: float = 0.0
    headway: Callable[[float], float] = lambda v: 0.0 * np.asarray(v, dtype=float)
    lanes: int = 1

    def __post_init__(self):
        if not self.d > 0:
            raise ParameterError("car length d must be positive")
        if not self.d0_plus >= 0:
            raise ParameterError("d0_plus must be nonnegative")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise ParameterError("lanes must be a positive integer")

    def D(self, v) -> float:
        return float(self.headway(v))


def flow_density(geom: CarGeometry, v: float) -> float:
    """Cars per unit length at speed v: k / (d + D+(v))."""
    return geom.lanes / (geom.d + geom.D(v))


def road_capacity(geom: CarGeometry, v_lo: float, v_hi: float, grid: int = 10_000) -> tuple[float, float]:
    """max over v in [v_lo, v_hi] of v * lambda(v), and the maximizing speed.

    Dense grid, then bounded Brent refinement between the grid neighbours
    of the best grid point.
    """
    if not (v_lo <= v_hi) or not math.isfinite(v_lo) or not math.isfinite(v_hi) or v_lo < 0:
        raise ParameterError(f"speed interval [{v_lo}, {v_hi}] is empty or invalid")

    def current(v):
        return v * flow_density(geom, v)

    if v_lo == v_hi:
        return current(v_lo), float(v_lo)
    vs = np.linspace(v_lo, v_hi, grid + 1)
    js = vs * geom.lanes / (geom.d + np.asarray(geom.headway(vs), dtype=float) * np.ones_like(vs))
    i = int(np.argmax(js))
    best_v, best_j = float(vs[i]), float(js[i])
    lo, hi = vs[max(i - 1, 0)], vs[min(i + 1, grid)]
    if hi > lo:
        res = minimize_scalar(lambda v: -current(v), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(hi))})
        if res.success and -res.fun > best_j:
            best_v, best_j = float(res.x), float(-res.fun)
    return best_j, best_v


def jam_growth_rate(d: float, d0_plus: float, d_plus: float, v: float) -> float:
    """Asymptotic jam-length growth v (d + d0+) / (d+ - d0+)."""
    if v < 0:
        raise ParameterError("speed must be nonnegative")
    if v == 0:
        return 0.0
    if not d_plus > d0_plus:
        raise SingularityError(f"need d+ > d0+ for a finite growth rate, got d+={d_plus}, d0+={d0_plus}")
    return v * (d + d0_plus) / (d_plus - d0_plus)


@dataclass(frozen=True)
class JamTrace:
    """Stop times and stop positions (front bumpers) of the queued cars.

    Car 0 is already stopped at the obstacle (front at 0) at time 0.
    """

    stop_times: np.ndarray
    stop_fronts: np.ndarray
    d: float

    def L(self, t) -> np.ndarray:
        """Jam length: obstacle to the tail of the last stopped car."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.stop_times, t, side="right") - 1
        return -self.stop_fronts[np.maximum(k, 0)] + self.d

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,L\n")
        for t, x in zip(self.stop_times, self.stop_fronts):
            buf.write(f"{t!r},{-x + self.d!r}\n")
        return buf.getvalue()


def simulate_jam(
    geom: CarGeometry,
    v: float,
    t_max: float,
    rng: np.random.Generator | None = None,
    headway_dist: DistributionSpec | None = None,
) -> JamTrace:
    """Cars at speed v and spacing d+ (tail to front) run into a stopped queue.

    Each car drives at v until its front is d0+ behind the tail of the
    stopped car ahead, then stops.  With ``headway_dist`` the incoming
    spacings are i.i.d. draws instead of the constant D+(v); a car whose
    spacing is already below d0+ stops when its predecessor does.
    """
    if not v > 0:
        raise ParameterError("speed must be positive")
    if not t_max >= 0:
        raise ParameterError("t_max must be nonnegative")
    d, d0 = geom.d, geom.d0_plus
    if headway_dist is None:
        dplus = geom.D(v)
        if not dplus > d0:
            raise SingularityError(f"need D+(v) > d0+, got {dplus} <= {d0}")
        draw = lambda k: np.full(k, dplus)
    else:
        if rng is None:
            raise ParameterError("random headways need a generator")
        if not headway_dist.mean > d0:
            raise SingularityError("mean headway must exceed d0+")
        draw = lambda k: np.asarray(headway_dist.sample(rng, k), dtype=float)
    times = [0.0]
    fronts = [0.0]
    x0_prev = 0.0  # initial front position of the previous car
    chunk = 1024
    while times[-1] <= t_max:
        gaps = draw(chunk)
        for h in gaps:
            x0 = x0_prev - d - h
            # catching the stopped queue versus being blocked from the start
            s = max(fronts[-1] - d - d0, x0 + v * times[-1])
            t = (s - x0) / v
            times.append(t)
            fronts.append(s)
            x0_prev = x0
            if t > t_max:
                break
    return JamTrace(np.array(times), np.array(fronts), d)


@dataclass(frozen=True)
class BottleneckRegime:
    regime: str  # "free", "delay" or "growing_jam"
    growth_rate: float = 0.0  # cars per unit time, growing_jam only


def classify_bottleneck(J_in: float, J_out_max: float, threshold: float = 0.5) -> BottleneckRegime:
    """growing_jam iff J_in > J_out_max; free iff J_in < threshold * J_out_max."""
    if J_in < 0 or J_out_max < 0:
        raise ParameterError("currents must be nonnegative")
    if J_in > J_out_max:
        return BottleneckRegime("growing_jam", J_in - J_out_max)
    if J_in < threshold * J_out_max or J_in == 0:
        return BottleneckRegime("free")
    return BottleneckRegime("delay")


def widening_time_gain(L: float, v: float, v1: float) -> float:
    """Time saved over a segment of length L when speed rises from v to v1."""
    if not (v > 0 and v1 > 0):
        raise ParameterError("speeds must be positive")
    return L / v - L / v1
