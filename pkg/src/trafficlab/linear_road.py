"""Mean speed of a car on a long road: queueing behind slow cars, temporary
obstacles, and slow cars with finite routes.

Closed forms are paired with simulators that build the underlying random
objects directly (Poisson streams, space-time Poisson fields of obstacles or
slow cars) and follow one car through them.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import NO_BYPASS, Deterministic, DistributionSpec, Exponential, ParameterError
from .kernels import impl as _k
from .quadrature import adaptive_simpson

__all__ = [
    "InstabilityError",
    "TandemSpec",
    "tandem_mean_speed",
    "tandem_mean_speed_relative",
    "GeometricLaw",
    "mm1_queue_distribution",
    "simulate_tandem",
    "simulate_mm1",
    "ResidualLife",
    "residual_life_density",
    "ObstacleRoadSpec",
    "obstacle_delay_mean",
    "mean_speed_from_ab",
    "mean_speed_obstacles",
    "RoadRun",
    "simulate_obstacle_road",
    "SlowCarRoadSpec",
    "slow_car_delay_mean",
    "mean_speed_slow_cars",
    "moving_frame_obstacle_spec",
    "simulate_slow_car_road",
]

QUAD_TOL = 1e-12


class InstabilityError(ValueError):
    """Queue behind a slow car grows without bound (r >= 1)."""


# ---------------------------------------------------------------------------
# Tandem queue behind slow cars
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TandemSpec:
    """Fast cars (density lambda1, speed v1) queue behind slow cars
    (density lambda2, speed v2) and overtake at rate mu, FIFO."""

    lambda1: float
    lambda2: float
    mu: float
    v1: float
    v2: float = 0.0
    slow_gap: DistributionSpec | None = None  # spacing of slow cars, default exponential

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 > 0 and self.mu > 0):
            raise ParameterError("need lambda1 >= 0, lambda2 > 0, mu > 0")
        if not (self.v1 > self.v2 >= 0):
            raise ParameterError("need v1 > v2 >= 0")
        if self.slow_gap is not None and abs(self.slow_gap.mean * self.lambda2 - 1) > 1e-9:
            raise ParameterError("slow_gap mean must equal 1 / lambda2")

    @property
    def v(self) -> float:
        return self.v1 - self.v2

    @property
    def r(self) -> float:
        return self.lambda1 * self.v / self.mu

    @property
    def gap(self) -> DistributionSpec:
        return self.slow_gap if self.slow_gap is not None else Exponential(self.lambda2)


def _check_stable(spec: TandemSpec):
    if spec.r >= 1:
        raise InstabilityError(f"r = lambda1 v / mu = {spec.r:.6g} >= 1")


def tandem_mean_speed_relative(spec: TandemSpec) -> float:
    """Mean fast-car speed relative to the slow cars:
    lambda2^-1 / ((mu - lambda1 v)^-1 + (lambda2 v)^-1)."""
    _check_stable(spec)
    v = spec.v
    return (1.0 / spec.lambda2) / (1.0 / (spec.mu - spec.lambda1 * v) + 1.0 / (spec.lambda2 * v))


def tandem_mean_speed(spec: TandemSpec) -> float:
    """Mean fast-car speed on the road (relative speed plus v2)."""
    return tandem_mean_speed_relative(spec) + spec.v2


@dataclass(frozen=True)
class GeometricLaw:
    """P(n) = (1 - r) r^n, n >= 0."""

    r: float

    def pmf(self, n):
        n = np.asarray(n)
        return np.where(n >= 0, (1 - self.r) * self.r ** np.maximum(n, 0), 0.0)

    @property
    def mean(self) -> float:
        return self.r / (1 - self.r)

    def table(self, tail: float = 1e-12) -> np.ndarray:
        """pmf values from 0 up to the first n with P(N > n) < tail."""
        if self.r == 0:
            return np.array([1.0])
        n = 16
        while self.r ** (n + 1) >= tail:
            n *= 2
        k = np.arange(n + 1)
        p = self.pmf(k)
        cut = int(np.argmax(self.r ** (k + 1) < tail))
        return p[: cut + 1]


def mm1_queue_distribution(spec: TandemSpec) -> tuple[GeometricLaw, float]:
    """Queue-length law behind one slow car and the mean overtaking time 1/(mu - lambda1 v)."""
    _check_stable(spec)
    return GeometricLaw(spec.r), 1.0 / (spec.mu - spec.lambda1 * spec.v)


def simulate_mm1(spec: TandemSpec, n_events: int, rng: np.random.Generator, cap: int = 200) -> np.ndarray:
    """Time-fraction law of the queue behind one slow car, from a CTMC run."""
    from .qnet import NetworkSpec, simulate_ctmc

    net = NetworkSpec([[0.0]], (spec.mu,), [spec.lambda1 * spec.v])
    run = simulate_ctmc(net, math.inf, rng, occ_cap=cap, max_events=n_events)
    return run.occupation[0]


@dataclass
class TandemRun:
    mean_speed: float  # relative frame
    segment_times: np.ndarray  # per measured car: time from S_0 to S_N
    length: float
    servers: int


def simulate_tandem(spec: TandemSpec, length: float, n_cars: int, rng: np.random.Generator,
                    warmup: float = 0.2) -> TandemRun:
    """Fast cars through the chain of slow cars, in the frame of the slow cars.

    Arrivals at the first slow car are Poisson(lambda1 v); each slow car
    is a FIFO exponential(mu) server; travel between slow cars takes
    gap / v.  The first ``warmup`` fraction of cars is discarded.  Returns
    the relative mean speed length / mean(time from S_0 to S_N).
    """
    _check_stable(spec)
    if spec.lambda1 == 0:
        raise ParameterError("no fast cars to measure (lambda1 = 0)")
    v = spec.v
    arrivals = np.cumsum(rng.exponential(1.0 / (spec.lambda1 * v), n_cars))
    a0 = arrivals.copy()
    pos = 0.0
    servers = 0
    while True:
        g = float(spec.gap.sample(rng))
        if pos + g > length:
            arrivals = arrivals + (length - pos) / v
            pos = length
            break
        # Lindley recursion: D_k = max(A_k, D_{k-1}) + S_k
        s = rng.exponential(1.0 / spec.mu, n_cars)
        c = np.cumsum(s)
        c_prev = np.concatenate([[0.0], c[:-1]])
        dep = c + np.maximum.accumulate(arrivals - c_prev)
        arrivals = dep + g / v
        pos += g
        servers += 1
    keep = slice(int(warmup * n_cars), n_cars)
    times = arrivals[keep] - a0[keep]
    return TandemRun(length / float(times.mean()), times, length, servers)


# ---------------------------------------------------------------------------
# Obstacles with random lifetimes
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ResidualLife:
    """Law of the remaining lifetime seen at a random time: density (1 - Q(t)) / m_Q."""

    Q: DistributionSpec

    def __post_init__(self):
        if not (0 < self.Q.mean < math.inf):
            raise ParameterError("residual life needs a positive finite mean")

    def pdf(self, t):
        return self.Q.equilibrium_pdf(t)

    def cdf(self, t):
        return self.Q.equilibrium_cdf(t)

    @property
    def mean(self) -> float:
        return self.Q.equilibrium_mean()

    def sample(self, rng, size=None):
        return self.Q.equilibrium_sample(rng, size)

    def upper(self, p: float = 1e-10) -> float:
        return self.Q.equilibrium_quantile(1.0 - p)

    def total_mass(self) -> float:
        s = self.upper(1e-14)
        return adaptive_simpson(lambda t: float(self.pdf(t)), 0.0, s, QUAD_TOL, self.Q.breakpoints())


def residual_life_density(Q: DistributionSpec) -> ResidualLife:
    return ResidualLife(Q)


def _is_infinite(F: DistributionSpec) -> bool:
    return isinstance(F, Deterministic) and math.isinf(F.value)


def _is_zero(F: DistributionSpec) -> bool:
    return float(F.cdf(0.0)) >= 1.0


def _mean_min(F: DistributionSpec, life: ResidualLife, scale: float = 1.0) -> float:
    """E min(scale * eta, zeta) = integral of (1 - F(s / scale)) (1 - H(s)) ds."""
    if _is_zero(F):
        return 0.0
    if _is_infinite(F):
        return life.mean
    s_max = life.upper(1e-10)
    f_hi = F.quantile(1.0 - 1e-16) * scale
    if math.isfinite(f_hi):
        s_max = min(s_max, f_hi)
    pts = [p * scale for p in F.breakpoints()] + list(life.Q.breakpoints())

    def integrand(s):
        return float(F.sf(s / scale)) * float(1.0 - life.cdf(s))

    return adaptive_simpson(integrand, 0.0, s_max, QUAD_TOL, pts)


def obstacle_delay_mean(Q: DistributionSpec, F: DistributionSpec) -> float:
    """a = E min(eta, zeta): eta ~ F bypass time, zeta ~ residual lifetime of Q."""
    return _mean_min(F, ResidualLife(Q))


@dataclass(frozen=True)
class ObstacleRoadSpec:
    """Obstacles appear as a space-time Poisson field of intensity ``lam``,
    live for a Q-distributed time, and can be bypassed in an F-distributed
    time (``NO_BYPASS`` forbids bypassing)."""

    lam: float
    Q: DistributionSpec
    F: DistributionSpec = NO_BYPASS
    v: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ParameterError("lam must be finite and nonnegative")
        if not self.v > 0:
            raise ParameterError("v must be positive")
        if not (0 < self.Q.mean < math.inf and self.Q.second_moment < math.inf):
            raise ParameterError("Q needs finite positive mean and finite second moment")

    @property
    def b(self) -> float:
        return self.lam * self.Q.mean


def mean_speed_from_ab(v: float, a: float, b: float) -> float:
    return v / (1.0 + a * b * v)


def mean_speed_obstacles(spec: ObstacleRoadSpec) -> float:
    """Long-run x / T(x) = v / (1 + a b v)."""
    if spec.lam == 0:
        return spec.v
    return mean_speed_from_ab(spec.v, obstacle_delay_mean(spec.Q, spec.F), spec.b)


@dataclass
class RoadRun:
    """One car's passage: total time, encounter positions and delays."""

    x_max: float
    T: float
    encounter_x: np.ndarray
    delays: np.ndarray
    free_speed: float

    @property
    def mean_speed(self) -> float:
        return self.x_max / self.T

    @property
    def idle_time(self) -> float:
        return self.T - self.x_max / self.free_speed

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("encounter_x,delay\n")
        for x, d in zip(self.encounter_x, self.delays):
            buf.write(f"{x!r},{d!r}\n")
        return buf.getvalue()


class _ShearedField:
    """Poisson field of (position y, birth t, lifetime) around the lines
    L(y) = t_c + (y - y_c) / speed of consecutive strips.

    Births are parametrized by the offset o = t_birth - L(y).  Items already
    alive at L(y) are drawn for the whole road at once: their count per
    unit length is Poisson(lam m), their lifetime is size-biased and their
    age is uniform on the lifetime.  Offsets o >= 0 are drawn per strip in
    bands extended on demand.  Time-stationarity of the field makes the
    offset law independent of where the strip lines fall.
    """

    def __init__(self, lam, life: DistributionSpec, extra: DistributionSpec | None, y_lo, y_hi, rng):
        self.lam, self.life, self.extra, self.rng = lam, life, extra, rng
        n = int(rng.poisson(lam * life.mean * (y_hi - y_lo)))
        y = np.sort(y_lo + (y_hi - y_lo) * rng.random(n))
        tau = np.asarray(life.size_biased_sample(rng, n), dtype=float) * np.ones(n)
        age = tau * rng.random(n)
        self.pre = (y, -age, tau, self._extra(n))

    def _extra(self, m):
        if self.extra is None:
            return np.zeros(m)
        return np.asarray(self.extra.sample(self.rng, m), dtype=float) * np.ones(m)

    @staticmethod
    def _sorted(ys, offs, lives, extras):
        # parts are individually sorted in y, so the stable sort is a merge
        if len(ys) == 1:
            return ys[0], offs[0], lives[0], extras[0]
        y = np.concatenate(ys)
        order = np.argsort(y, kind="stable")
        return y[order], np.concatenate(offs)[order], np.concatenate(lives)[order], np.concatenate(extras)[order]

    def post(self, y_lo, y_hi, o_lo, o_hi):
        """Births with offsets in [o_lo, o_hi) over positions [y_lo, y_hi), sorted in y."""
        n = int(self.rng.poisson(self.lam * (y_hi - y_lo) * (o_hi - o_lo)))
        # sorted uniforms from normalized exponential spacings
        e = np.cumsum(self.rng.exponential(1.0, n + 1))
        y = y_lo + (y_hi - y_lo) * (e[:-1] / e[-1])
        o = o_lo + (o_hi - o_lo) * self.rng.random(n)
        tau = np.asarray(self.life.sample(self.rng, n), dtype=float) * np.ones(n)
        return y, o, tau, self._extra(n)

    def strip(self, y_lo, y_hi, posts):
        i0, i1 = np.searchsorted(self.pre[0], [y_lo, y_hi], side="left")
        parts = [tuple(a[i0:i1] for a in self.pre)] + posts
        return self._sorted(*zip(*parts))


def _strip_plan(expected_per_length: float, scale_time: float):
    """Strip length with ~20 expected encounters and an initial band height."""
    length = 12.0 / max(expected_per_length, 1e-12)
    band = 2.0 * 12.0 * scale_time + 5.0 * scale_time
    return length, band


def simulate_obstacle_road(spec: ObstacleRoadSpec, x_max: float, rng: np.random.Generator) -> RoadRun:
    """Follow one car from (0, 0) to x_max through a space-time obstacle field.

    A car reaching an alive obstacle waits for min(bypass time, remaining
    lifetime).  Obstacles born before time 0 are included through the
    stationary picture of obstacles alive when the car could first arrive.
    """
    if not x_max > 0:
        raise ParameterError("x_max must be positive")
    v = spec.v
    if spec.lam == 0:
        return RoadRun(x_max, x_max / v, np.empty(0), np.empty(0), v)
    bypass = None if _is_infinite(spec.F) else spec.F
    field_ = _ShearedField(spec.lam, spec.Q, bypass, 0.0, x_max, rng)
    scale = spec.Q.equilibrium_mean() + spec.Q.quantile(0.999) / 20.0
    length, band0 = _strip_plan(spec.b, scale)
    enc_y, enc_d = [], []
    y_c, t_c = 0.0, 0.0
    while y_c < x_max:
        y_end = min(x_max, y_c + length)
        band = band0
        posts = [field_.post(y_c, y_end, 0.0, band)]
        while True:
            y, o, tau, eta = field_.strip(y_c, y_end, posts)
            tb = t_c + (y - y_c) / v + o
            td = tb + tau
            if bypass is None:
                eta = np.full(y.size, math.inf)
            ey = np.empty(y.size)
            ed = np.empty(y.size)
            t_end, n = _k.obstacle_walk(y, tb, td, eta, y_c, t_c, y_end, v, ey, ed, 0)
            if t_end - (t_c + (y_end - y_c) / v) < band:
                break
            posts.append(field_.post(y_c, y_end, band, 2 * band))
            band *= 2
        enc_y.append(ey[:n])
        enc_d.append(ed[:n])
        y_c, t_c = y_end, t_end
    return RoadRun(x_max, t_c, np.concatenate(enc_y), np.concatenate(enc_d), v)


# ---------------------------------------------------------------------------
# Slow cars with finite routes
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SlowCarRoadSpec:
    """Slow cars enter as a space-time Poisson field of intensity ``lam``,
    drive a G-distributed route length at v2 and leave; a fast car (speed
    v1) stuck behind one needs an F-distributed time to overtake."""

    lam: float
    G: DistributionSpec
    F: DistributionSpec
    v1: float
    v2: float

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ParameterError("lam must be finite and nonnegative")
        if not (self.v1 >= self.v2 > 0):
            raise ParameterError("need v1 >= v2 > 0")
        if not (0 < self.G.mean < math.inf and self.G.second_moment < math.inf):
            raise ParameterError("G needs finite positive mean and finite second moment")

    @property
    def d(self) -> float:
        return self.lam * self.G.mean * (1.0 / self.v2 - 1.0 / self.v1)


def slow_car_delay_mean(spec: SlowCarRoadSpec) -> float:
    """c = E min(v2 tau, beta), beta with density (1 - G(x)) / m_G."""
    return _mean_min(spec.F, ResidualLife(spec.G), scale=spec.v2)


def mean_speed_slow_cars(spec: SlowCarRoadSpec) -> float:
    """Long-run x / T(x) = v1 (1 + d c) / (1 + d c v1 / v2)."""
    if spec.lam == 0 or spec.v1 == spec.v2:
        return spec.v1
    dc = spec.d * slow_car_delay_mean(spec)
    return spec.v1 * (1.0 + dc) / (1.0 + dc * spec.v1 / spec.v2)


def moving_frame_obstacle_spec(spec: SlowCarRoadSpec) -> ObstacleRoadSpec:
    """Slow cars seen from a frame moving at v2: fixed obstacles living route / v2."""
    return ObstacleRoadSpec(spec.lam, spec.G.scaled(1.0 / spec.v2), spec.F, spec.v1 - spec.v2)


def simulate_slow_car_road(spec: SlowCarRoadSpec, x_max: float, rng: np.random.Generator) -> RoadRun:
    """Follow one fast car from (0, 0) to x_max among slow cars, in the road frame.

    Slow car j enters at (x_j, t_j) and drives x = x_j + v2 (t - t_j) until
    it has covered its route.  A fast car that catches it follows at v2
    until its overtaking time runs out or the slow car leaves, whichever
    happens first.  Slow cars are generated on their lines u = x - v2 t
    in strips along the fast car's path.
    """
    if not x_max > 0:
        raise ParameterError("x_max must be positive")
    v1, v2 = spec.v1, spec.v2
    if spec.lam == 0 or v1 == v2:
        return RoadRun(x_max, x_max / v1, np.empty(0), np.empty(0), v1)
    rel = v1 - v2
    life = spec.G.scaled(1.0 / v2)  # time on the road
    overtake = None if _is_infinite(spec.F) else spec.F
    u_hi = x_max  # the fast car's u never exceeds its x
    field_ = _ShearedField(spec.lam, life, overtake, 0.0, u_hi, rng)
    scale = life.equilibrium_mean() + life.quantile(0.999) / 20.0
    length, band0 = _strip_plan(spec.lam * life.mean, scale)
    enc_x, enc_d = [], []
    u_c, x_c, t_c = 0.0, 0.0, 0.0
    while x_c < x_max:
        u_end = min(u_hi, u_c + length)
        band = band0
        posts = [field_.post(u_c, u_end, 0.0, band)]
        while True:
            u, o, tau_life, tau = field_.strip(u_c, u_end, posts)
            tb = t_c + (u - u_c) / rel + o
            texit = tb + tau_life
            if overtake is None:
                tau = np.full(u.size, math.inf)
            ex = np.empty(u.size)
            ed = np.empty(u.size)
            x_s, t_s, n = _k.slowcar_walk(u, tb, texit, tau, x_c, t_c, u_end, x_max, v1, v2, ex, ed, 0)
            u_s = x_s - v2 * t_s
            if t_s - (t_c + (u_s - u_c) / rel) < band:
                break
            posts.append(field_.post(u_c, u_end, band, 2 * band))
            band *= 2
        enc_x.append(ex[:n])
        enc_d.append(ed[:n])
        u_c, x_c, t_c = u_end, x_s, t_s
        if u_c >= u_hi and x_c < x_max:
            raise RuntimeError("strip bookkeeping failed to reach x_max")
    return RoadRun(x_max, t_c, np.concatenate(enc_x), np.concatenate(enc_d), v1)
