"""Jam start-up dynamics and the velocity-mark flow with overtaking.

Model A: point cars at Poisson positions, speeds 0 or 1, no overtaking.
Each car starts after an exponential(1) time; a moving car that reaches a
standing predecessor stops and restarts an exponential(1) time after the
predecessor starts again.

Model B: point cars on the left half-line; a car moves at speed v while
the distance to the car ahead is at least d_eff and stands otherwise.

Velocity flow: each driver has a two-state Markov desired speed w_i(t);
a car that touches its predecessor adopts its velocity and overtakes it at
rate lambda while w_i exceeds that velocity.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import ParameterError
from .kernels import impl as _k
from .stats import Estimate, jackknife_covariance

__all__ = [
    "StartupResult",
    "simulate_startup_A",
    "StartupBResult",
    "follower_trajectory",
    "simulate_startup_B",
    "VelocityFlowSpec",
    "VelocityTrace",
    "simulate_velocity_flow",
    "covariance_estimate",
    "cluster_sizes",
    "phase_sweep",
]


# ---------------------------------------------------------------------------
# Model A
# ---------------------------------------------------------------------------
@dataclass
class StartupResult:
    """Cars indexed front (0) to back.

    ``final_start[i]`` is t_i, the last time car i starts and
    ``final_pos[i]`` = x_i(t_i).  ``literal_gaps[i-1]`` is
    x_{i-1}(t_{i-1}) - x_i(t_i); it has an atom at 0 because a car that
    waited behind its predecessor restarts from the spot that car left.
    ``final_gaps[i-1]`` is the spacing x_{i-1}(t) - x_i(t) once both cars
    have left the jam (t >= max(t_{i-1}, t_i), both at speed 1), which
    equals the literal gap plus t_i - t_{i-1}.
    """

    initial: np.ndarray
    stops: np.ndarray
    final_start: np.ndarray
    final_pos: np.ndarray
    final_gaps: np.ndarray
    literal_gaps: np.ndarray
    events: int
    log: list = field(default_factory=list)  # (time, car, kind, position)

    def position(self, i: int, t: float) -> float:
        """Position of car i at time t, from the event log."""
        x = float(self.initial[i])
        last_t, moving = 0.0, False
        for (te, car, kind, _) in self.log:
            if te > t:
                break
            if car != i:
                continue
            if moving:
                x += te - last_t
            last_t = te
            moving = kind == "start"
        if moving:
            x += t - last_t
        return x


def simulate_startup_A(
    rho: float,
    window,
    rng: np.random.Generator,
    t_max: float = math.inf,
    keep_log: bool = False,
) -> StartupResult:
    """Start-up of a standing Poisson(rho) queue on ``window``.

    The rightmost car leads with an empty road ahead.  Runs until every
    car moves for good (or ``t_max``).
    """
    if not (0 < rho < 1):
        raise ParameterError(f"model A needs 0 < rho < 1, got {rho!r}")
    a, b = (float(w) for w in window)
    if not b > a:
        raise ParameterError("window must be nondegenerate")
    n = int(rng.poisson(rho * (b - a)))
    x0 = np.sort(rng.uniform(a, b, n))[::-1].copy()  # front first
    start_clock = rng.exponential(1.0, n)
    pos = x0.copy()
    since = np.zeros(n)
    moving = np.zeros(n, dtype=bool)
    waiting = np.zeros(n, dtype=bool)  # stopped behind the car ahead
    stops = np.zeros(n, dtype=np.int64)
    last_start = np.full(n, math.nan)
    start_pos = np.full(n, math.nan)
    version = np.zeros(n, dtype=np.int64)
    heap = [(float(start_clock[i]), i, "start", 0) for i in range(n)]
    heapq.heapify(heap)
    log = []
    events = 0

    def where(i, t):
        return pos[i] + (t - since[i]) if moving[i] else pos[i]

    def schedule_collision(i, t):
        # car i moving, car i-1 standing
        gap = pos[i - 1] - where(i, t)
        version[i] += 1
        heapq.heappush(heap, (t + max(gap, 0.0), i, "collide", int(version[i])))

    while heap:
        t, i, kind, ver = heapq.heappop(heap)
        if t > t_max:
            break
        if kind == "collide":
            if ver != version[i] or not moving[i] or moving[i - 1]:
                continue
            pos[i] = where(i, t)
            since[i] = t
            moving[i] = False
            waiting[i] = True
            stops[i] += 1
            events += 1
            if keep_log:
                log.append((t, i, "stop", float(pos[i])))
            if i + 1 < n and moving[i + 1]:
                schedule_collision(i + 1, t)
            continue
        # a start event: initial clock, or restart after the car ahead left
        if moving[i]:
            continue
        if kind == "start" and (waiting[i] or not math.isnan(last_start[i])):
            continue  # initial clock already used or superseded
        if kind == "restart" and (ver != version[i] or not waiting[i]):
            continue
        pos[i] = where(i, t)
        since[i] = t
        moving[i] = True
        waiting[i] = False
        last_start[i] = t
        start_pos[i] = pos[i]
        events += 1
        if keep_log:
            log.append((t, i, "start", float(pos[i])))
        if i > 0 and not moving[i - 1]:
            schedule_collision(i, t)
        if i + 1 < n:
            if waiting[i + 1]:
                version[i + 1] += 1
                heapq.heappush(heap, (t + float(rng.exponential(1.0)), i + 1, "restart", int(version[i + 1])))
            elif moving[i + 1]:
                version[i + 1] += 1  # cancel its pending collision
    literal = start_pos[:-1] - start_pos[1:] if n > 1 else np.empty(0)
    offset = start_pos - last_start  # x_i(t) - t for t >= t_i
    spacing = offset[:-1] - offset[1:] if n > 1 else np.empty(0)
    return StartupResult(x0, stops, last_start, start_pos, spacing, literal, events, log)


# ---------------------------------------------------------------------------
# Model B
# ---------------------------------------------------------------------------
def follower_trajectory(tp: np.ndarray, xp: np.ndarray, x0: float, v: float, d_eff: float):
    """Breakpoints of X(t) = max(x0, min(x0 + v t, P(t) - d_eff)).

    P is continuous piecewise linear through (tp, xp) with slopes in
    {0, v} and slope v after the last breakpoint.  The result has the
    same form.  It is the unique trajectory that moves at v exactly when
    its forward gap is at least d_eff.
    """
    cand = [0.0]
    for j in range(len(tp)):
        t_lo = tp[j]
        t_hi = tp[j + 1] if j + 1 < len(tp) else math.inf
        s = v if j + 1 == len(tp) else (xp[j + 1] - xp[j]) / (tp[j + 1] - tp[j])
        a = xp[j] - d_eff
        cand.append(t_lo)
        if abs(v - s) > 1e-12 * v:
            tc = (a - s * t_lo - x0) / (v - s)
            if t_lo < tc < t_hi:
                cand.append(tc)
        if s > 0:
            tc = t_lo + (x0 - a) / s
            if t_lo < tc < t_hi:
                cand.append(tc)
    cand = np.unique(np.array(cand))

    def P(t):
        j = np.searchsorted(tp, t, side="right") - 1
        return np.where(j + 1 < len(tp), np.interp(t, tp, xp), xp[-1] + v * (t - tp[-1]))

    X = np.maximum(x0, np.minimum(x0 + v * cand, P(cand) - d_eff))
    # append a point on the final slope-v ray, then drop collinear points
    t_end = cand[-1] + 1.0
    X_end = max(x0, min(x0 + v * t_end, float(P(t_end)) - d_eff))
    T = np.append(cand, t_end)
    X = np.append(X, X_end)
    slope = np.diff(X) / np.diff(T)
    slope = np.where(np.abs(slope) < 1e-9 * v, 0.0, np.where(np.abs(slope - v) < 1e-9 * v, v, slope))
    keep = [0]
    for k in range(1, len(T) - 1):
        if slope[k] != slope[k - 1]:
            keep.append(k)
    T, X = T[keep], X[keep]
    return T, X, slope[np.array(keep)]


@dataclass
class StartupBResult:
    tau1: np.ndarray  # first start time per car (front car is index 0)
    tau2: np.ndarray  # last start time
    x: np.ndarray  # x_1(tau2_k) - x_k(tau2_k)
    initial: np.ndarray
    trajectories: list


def _pos(T, X, v, t):
    j = np.searchsorted(T, t, side="right") - 1
    if j + 1 < len(T):
        return float(np.interp(t, T, X))
    return float(X[-1] + v * (t - T[-1]))


def simulate_startup_B(rho: float, v: float, d_eff: float, n_cars: int, rng: np.random.Generator) -> StartupBResult:
    """Threshold start-up from a Poisson(rho) half-line queue.

    Car 1 is the first point left of 0 and never blocked.  Each later car
    follows the exact piecewise-linear trajectory of the threshold rule.
    """
    if not (rho > 0 and v > 0 and d_eff > 0):
        raise ParameterError("need rho, v, d_eff > 0")
    if n_cars < 1:
        raise ParameterError("need at least one car")
    x0 = -np.cumsum(rng.exponential(1.0 / rho, n_cars))
    trajs = []
    tau1 = np.zeros(n_cars)
    tau2 = np.zeros(n_cars)
    T, X = np.array([0.0]), np.array([x0[0]])
    trajs.append((T, X))
    for k in range(1, n_cars):
        T, X, slope = follower_trajectory(T, X, float(x0[k]), v, d_eff)
        trajs.append((T, X))
        moving = np.flatnonzero(slope > 0)
        tau1[k] = T[moving[0]] if moving.size else T[-1]
        # start of the final slope-v run
        still = np.flatnonzero(slope == 0)
        tau2[k] = T[still[-1] + 1] if still.size and still[-1] + 1 < len(T) else (T[-1] if still.size else 0.0)
    T1, X1 = trajs[0]
    xs = np.array([(_pos(T1, X1, v, tau2[k]) - _pos(*trajs[k], v, tau2[k])) for k in range(n_cars)])
    return StartupBResult(tau1, tau2, xs, x0, trajs)


# ---------------------------------------------------------------------------
# Velocity-mark flow
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class VelocityFlowSpec:
    """Two-state desired-speed drivers; ``lambda_overtake`` may be math.inf."""

    n_cars: int
    v_a: float
    v_b: float
    q_ab: float
    q_ba: float
    C1: float
    C2: float
    lambda_overtake: float
    rho0: float

    def __post_init__(self):
        if self.n_cars < 0:
            raise ParameterError("n_cars must be nonnegative")
        if not (0 <= self.C1 < self.v_a < self.v_b < self.C2):
            raise ParameterError("need C1 < v_a < v_b < C2")
        if not (self.q_ab > 0 and self.q_ba > 0):
            raise ParameterError("switching rates must be positive")
        if not (self.lambda_overtake >= 0):
            raise ParameterError("overtaking intensity must be nonnegative")
        if not self.rho0 > 0:
            raise ParameterError("rho0 must be positive")

    @property
    def p_fast(self) -> float:
        return self.q_ab / (self.q_ab + self.q_ba)


@dataclass
class VelocityTrace:
    """Snapshots indexed [snapshot, car id]; ``rank[s, k]`` is the car at rank k."""

    times: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    rank: np.ndarray
    contact: np.ndarray
    contacts: int
    overtakes: int
    switches: int


def simulate_velocity_flow(spec: VelocityFlowSpec, t_max: float, snapshot_times, rng: np.random.Generator) -> VelocityTrace:
    """Event-exact simulation from i.i.d. exponential(rho0) initial gaps.

    Car 0 leads at position 0.  Driver states start from their stationary
    law.  Overtaking puts the overtaker at the overtaken car's position,
    ahead of it in the order; the overtaken car then touches it.
    """
    snaps = np.asarray(sorted(float(s) for s in snapshot_times), dtype=float)
    if snaps.size and (snaps[0] < 0 or snaps[-1] > t_max):
        raise ParameterError("snapshot times must lie in [0, t_max]")
    n, S = spec.n_cars, snaps.size
    pos_s = np.zeros((S, n))
    vel_s = np.zeros((S, n))
    rank_s = np.zeros((S, n), dtype=np.int64)
    cont_s = np.zeros((S, n), dtype=np.int8)
    counters = np.zeros(3, dtype=np.int64)
    if n == 0:
        return VelocityTrace(snaps, pos_s, vel_s, rank_s, cont_s, 0, 0, 0)
    gaps = rng.exponential(1.0 / spec.rho0, n - 1)
    pos = np.concatenate([[0.0], -np.cumsum(gaps)])
    wst = (rng.random(n) < spec.p_fast).astype(np.int64)
    qrates = np.array([spec.q_ab, spec.q_ba])
    next_sw = rng.exponential(1.0, n) / qrates[wst]
    car = np.arange(n, dtype=np.int64)
    contact = np.zeros(n, dtype=np.int8)
    _k.velocity_flow_run(rng, car, pos, wst, contact, next_sw, np.array([spec.v_a, spec.v_b]), qrates,
                         float(spec.lambda_overtake), 0.0, float(t_max), snaps, pos_s, vel_s, rank_s, cont_s, counters)
    return VelocityTrace(snaps, pos_s, vel_s, rank_s, cont_s, int(counters[0]), int(counters[1]), int(counters[2]))


def covariance_estimate(traces, i: int, j: int, snapshot: int = -1) -> Estimate:
    """Across-replica covariance of v_i and v_j (car ids) at one snapshot."""
    traces = list(traces)
    if len(traces) < 2:
        raise ParameterError("need at least two replicas")
    vi = np.array([tr.vel[snapshot, i] for tr in traces])
    vj = np.array([tr.vel[snapshot, j] for tr in traces])
    return jackknife_covariance(vi, vj)


def cluster_sizes(contact_by_rank) -> np.ndarray:
    """Sizes of maximal runs of cars each touching the one ahead."""
    c = np.asarray(contact_by_rank, dtype=bool)
    if c.size == 0:
        return np.empty(0, dtype=np.int64)
    heads = np.flatnonzero(~c | (np.arange(c.size) == 0))
    return np.diff(np.append(heads, c.size))


def phase_sweep(template: VelocityFlowSpec, lambda_grid, t_max: float, rng: np.random.Generator, replicas: int = 50):
    """Rows (lambda, mean rank-neighbour velocity covariance, mean cluster size).

    Exploratory only.  Statistics are NaN when the flow has fewer than two cars.
    """
    grid = list(lambda_grid)
    if not grid:
        raise ParameterError("lambda grid is empty")
    rows = []
    for lam in grid:
        spec = VelocityFlowSpec(template.n_cars, template.v_a, template.v_b, template.q_ab, template.q_ba,
                                template.C1, template.C2, float(lam), template.rho0)
        if spec.n_cars < 2:
            rows.append((float(lam), math.nan, math.nan))
            continue
        vels, sizes = [], []
        for _ in range(replicas):
            tr = simulate_velocity_flow(spec, t_max, [t_max], rng)
            order = tr.rank[0]
            vels.append(tr.vel[0, order])
            sizes.extend(cluster_sizes(tr.contact[0, order]).tolist())
        V = np.array(vels)
        covs = [np.cov(V[:, k], V[:, k + 1], ddof=1)[0, 1] for k in range(spec.n_cars - 1)]
        rows.append((float(lam), float(np.mean(covs)), float(np.mean(sizes))))
    return rows
