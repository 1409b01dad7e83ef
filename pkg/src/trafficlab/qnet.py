"""Closed and open Jackson networks.

Traffic equations, product-form stationary laws, partition functions by
convolution, generator construction for brute-force checks, exact CTMC
simulation, and plug-in estimation of routing and service rates.

Node indices are 0-based in arrays.  In jump-count matrices index 0 is the
outside world and node i sits at index i+1.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.signal import lfilter
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .distributions import ParameterError
from .kernels import impl as _k

__all__ = [
    "StructuralError",
    "UnsupportedConfiguration",
    "NetworkSpec",
    "TrafficSolution",
    "solve_traffic_closed",
    "solve_traffic_open",
    "neumann_series",
    "partition_function",
    "log_partition_table",
    "partition_table_general",
    "load_means",
    "enumerate_states",
    "stationary_closed",
    "ClosedStationary",
    "generator_closed",
    "generator_open_truncated",
    "stationary_from_generator",
    "stationary_open",
    "OpenStationary",
    "simulate_ctmc",
    "CTMCRun",
    "estimate_parameters",
    "ParameterEstimate",
    "load_network",
]

ROW_TOL = 1e-12


class StructuralError(ValueError):
    """Routing structure violates a model assumption (reducible, singular...)."""


class UnsupportedConfiguration(ValueError):
    pass


def _as_table(rate) -> np.ndarray:
    """Service-rate table (mu(1), mu(2), ...); the last entry repeats."""
    t = np.atleast_1d(np.asarray(rate, dtype=float))
    if t.ndim != 1 or t.size == 0:
        raise ParameterError("service rate must be a number or a nonempty table")
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise ParameterError("service rates must be positive and finite for n > 0")
    return t


@dataclass(frozen=True)
class NetworkSpec:
    """Jackson network: routing P, per-node service tables, external arrivals.

    ``mu[i]`` is a constant rate or a table (mu_i(1), ..., mu_i(K)) whose
    last value is used for all larger queue lengths.  ``discipline`` is
    recorded only; queue-length dynamics depend on the total rates alone.
    """

    P: np.ndarray
    mu: tuple
    lambda_ext: np.ndarray | None = None
    discipline: str = "FIFO"
    check_structure: bool = True

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ParameterError("P must be a nonempty square matrix")
        n = P.shape[0]
        if np.any(P < 0) or np.any(~np.isfinite(P)):
            raise ParameterError("P entries must be finite and nonnegative")
        rows = P.sum(axis=1)
        if np.any(rows > 1 + ROW_TOL):
            raise ParameterError("row sums of P must not exceed 1")
        # a bare number applies to every node; otherwise one entry (number or table) per node
        per_node = [self.mu] * n if np.isscalar(self.mu) else list(self.mu)
        mu = tuple(_as_table(m) for m in per_node)
        if len(mu) != n:
            raise ParameterError(f"need {n} service specifications, got {len(mu)}")
        lam = np.zeros(n) if self.lambda_ext is None else np.array(self.lambda_ext, dtype=float)
        if lam.shape != (n,) or np.any(lam < 0) or np.any(~np.isfinite(lam)):
            raise ParameterError("lambda_ext must be a nonnegative vector of length N")
        P.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lambda_ext", lam)
        if self.check_structure:
            self._check_structure()

    @property
    def N(self) -> int:
        return self.P.shape[0]

    @property
    def exit_probs(self) -> np.ndarray:
        return np.clip(1.0 - self.P.sum(axis=1), 0.0, 1.0)

    @property
    def is_closed(self) -> bool:
        return bool(np.all(np.abs(self.P.sum(axis=1) - 1.0) <= ROW_TOL) and not np.any(self.lambda_ext > 0))

    @property
    def constant_rates(self) -> bool:
        return all(t.size == 1 for t in self.mu)

    def service_rate(self, i: int, n: int) -> float:
        if n <= 0:
            return 0.0
        t = self.mu[i]
        return float(t[min(n, t.size) - 1])

    def mu_matrix(self, extra: int = 0) -> np.ndarray:
        """Dense table with column n holding mu_i(n); column 0 is zero."""
        k = max(t.size for t in self.mu) + 1 + extra
        out = np.zeros((self.N, k))
        for i, t in enumerate(self.mu):
            out[i, 1 : t.size + 1] = t
            out[i, t.size + 1 :] = t[-1]
        return out

    def _check_structure(self):
        n = self.N
        support = sparse.csr_matrix(self.P > 0)
        if self.is_closed:
            ncomp, _ = connected_components(support, directed=True, connection="strong")
            if ncomp != 1:
                raise StructuralError("closed network routing must be irreducible")
            return
        if np.any(self.lambda_ext > 0) and np.all(self.exit_probs <= ROW_TOL):
            raise StructuralError("open network needs a node with exit probability > 0")
        if not np.any(self.lambda_ext > 0):
            raise StructuralError("rows of P do not all sum to 1 but there are no external arrivals")
        # every node must be able to reach the exit
        reach = self.exit_probs > ROW_TOL
        adj = self.P > 0
        changed = True
        while changed:
            new = reach | (adj @ reach.astype(int) > 0)
            changed = bool(np.any(new != reach))
            reach = new
        if not np.all(reach):
            raise StructuralError(f"nodes {np.flatnonzero(~reach).tolist()} cannot reach the exit")

    # -- file form -------------------------------------------------------
    def to_dict(self) -> dict:
        edges = [[int(i) + 1, int(j) + 1, float(self.P[i, j])] for i, j in zip(*np.nonzero(self.P))]
        mu = {str(i + 1): (float(t[0]) if t.size == 1 else t.tolist()) for i, t in enumerate(self.mu)}
        lam = {str(i + 1): float(x) for i, x in enumerate(self.lambda_ext) if x > 0}
        return {"N": self.N, "edges": edges, "mu": mu, "lambda": lam, "discipline": self.discipline}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        allowed = {"N", "edges", "mu", "lambda", "discipline"}
        extra = set(d) - allowed
        if extra:
            raise ParameterError(f"unknown network fields: {sorted(extra)}")
        n = int(d["N"])
        P = np.zeros((n, n))
        for e in d.get("edges", []):
            i, j, p = int(e[0]), int(e[1]), float(e[2])
            if not (1 <= i <= n and 1 <= j <= n):
                raise ParameterError(f"edge ({i}, {j}) outside 1..{n}")
            P[i - 1, j - 1] += p
        mu_d = d["mu"]
        if isinstance(mu_d, (int, float)):
            mu = [float(mu_d)] * n
        elif isinstance(mu_d, list):
            mu = mu_d
        else:
            mu = [mu_d[str(i + 1)] for i in range(n)]
        lam = np.zeros(n)
        for k, v in (d.get("lambda") or {}).items():
            lam[int(k) - 1] = float(v)
        return cls(P, tuple(mu), lam, d.get("discipline", "FIFO"))


def load_network(path_or_text: str) -> NetworkSpec:
    """Read a network from a JSON file path or JSON text."""
    text = path_or_text
    if not path_or_text.lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    return NetworkSpec.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Traffic equations
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TrafficSolution:
    rho: np.ndarray
    residual: float
    closed: bool

    @property
    def pi(self) -> np.ndarray:
        return self.rho / self.rho.sum()


def solve_traffic_closed(P) -> TrafficSolution:
    """Left fixed vector of a stochastic irreducible P, scaled to max entry 1."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if not np.allclose(P.sum(axis=1), 1.0, atol=ROW_TOL, rtol=0):
        raise StructuralError("closed routing must be stochastic")
    ncomp, _ = connected_components(sparse.csr_matrix(P > 0), directed=True, connection="strong")
    if ncomp != 1:
        raise StructuralError("routing matrix is reducible")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.maximum(pi, 0.0)
    # one step of refinement against the fixed-point equation
    pi = pi @ P
    rho = pi / pi.max()
    res = float(np.max(np.abs(rho @ P - rho)) / np.max(np.abs(rho)))
    return TrafficSolution(rho, res, True)


def neumann_series(lam, P, terms: int = 100) -> np.ndarray:
    """lambda + lambda P + ... + lambda P^terms."""
    lam = np.asarray(lam, dtype=float)
    P = np.asarray(P, dtype=float)
    acc = lam.copy()
    term = lam.copy()
    for _ in range(terms):
        term = term @ P
        acc += term
    return acc


def solve_traffic_open(lambda_ext, P, check: bool = True) -> TrafficSolution:
    """Solve rho = lambda + rho P directly; optionally cross-check by series."""
    lam = np.asarray(lambda_ext, dtype=float)
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.eye(n) - P.T
    if np.linalg.matrix_rank(A) < n:
        raise StructuralError("I - P is singular: routing is not properly substochastic")
    rho = np.linalg.solve(A, lam)
    scale = max(float(np.max(np.abs(rho))), 1e-300)
    res = float(np.max(np.abs(lam + rho @ P - rho)) / scale)
    if check:
        spec_rad = float(np.max(np.abs(np.linalg.eigvals(P)))) if n else 0.0
        if spec_rad >= 1.0:
            raise StructuralError(f"spectral radius of P is {spec_rad:.6g} >= 1")
        # enough terms for the tail to fall below 1e-13 of the solution
        terms = 100 if spec_rad == 0 else int(min(1e5, max(100, math.log(1e-13) / math.log(spec_rad) + 50)))
        ser = neumann_series(lam, P, terms)
        if np.max(np.abs(ser - rho)) > 1e-8 * scale:
            raise StructuralError("direct solve disagrees with the Neumann series")
    return TrafficSolution(rho, res, False)


# ---------------------------------------------------------------------------
# Partition functions
# ---------------------------------------------------------------------------
def _partition_linear(r: np.ndarray, M: int):
    """Z(0..M) / s^m in linear arithmetic with s = max(r), or None on overflow."""
    if r.size * (M + 1) > 1_000_000 or r.size == 0:
        return None
    s = float(np.max(r)) if np.max(r) > 0 else 1.0
    z = np.zeros(M + 1)
    z[0] = 1.0
    for ri in r / s:
        if ri > 0:
            z = lfilter([1.0], [1.0, -ri], z)
    if not np.all(np.isfinite(z)) or np.max(z) > 1e300:
        return None
    return z, s


def log_partition_table(r, M: int) -> np.ndarray:
    """log Z_{N,m} for m = 0..M with constant per-node loads r."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(~np.isfinite(r)):
        raise ParameterError("loads must be finite and nonnegative")
    if M < 0:
        raise ParameterError("M must be nonnegative")
    lin = _partition_linear(r, M)
    if lin is not None:
        z, s = lin
        with np.errstate(divide="ignore"):
            return np.log(z) + np.arange(M + 1) * math.log(s)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
    return np.asarray(_k.log_partition(np.ascontiguousarray(log_r), int(M)))


def partition_function(r, M: int, log: bool = False) -> float:
    """Z_{N,M} = sum over compositions of M of prod r_i^{n_i}.

    Uses the one-node-at-a-time convolution, in log space when the linear
    recursion would overflow.
    """
    r = np.asarray(r, dtype=float)
    if not log and M >= 0 and np.all(r >= 0) and np.all(np.isfinite(r)):
        lin = _partition_linear(r, M)
        if lin is not None:
            z, s = lin
            val = z[M] * s**M
            if math.isfinite(val) and (val > 0 or z[M] == 0):
                return float(val)
    lz = float(log_partition_table(r, M)[M])
    return lz if log else math.exp(lz)


def load_means(r, M: int):
    """(log Z_{N,M}, means, marginals) for constant per-node loads r.

    Uses the tail identity P(n_i >= k) = r_i^k Z(M-k) / Z(M).
    """
    r = np.asarray(r, dtype=float)
    n = r.size
    lz = log_partition_table(r, M)
    with np.errstate(divide="ignore"):
        lr = np.log(r)
    k = np.arange(M + 1)
    with np.errstate(invalid="ignore"):
        tail = np.exp(np.where(k[None, :] == 0, 0.0, k[None, :] * lr[:, None]) + lz[M - k][None, :] - lz[M])
    tail[:, 0] = 1.0
    tail = np.nan_to_num(tail, nan=0.0)
    marg = tail - np.concatenate([tail[:, 1:], np.zeros((n, 1))], axis=1)
    means = tail[:, 1:].sum(axis=1)
    return float(lz[M]), means, marg


def partition_table_general(factors: Sequence[np.ndarray], M: int) -> np.ndarray:
    """Z(m), m <= M, for per-node weight sequences f_i(0..M) (f_i(0) = 1)."""
    z = np.zeros(M + 1)
    z[0] = 1.0
    for f in factors:
        z = np.convolve(z, np.asarray(f, dtype=float)[: M + 1])[: M + 1]
    return z


def enumerate_states(N: int, M: int) -> np.ndarray:
    """All (n_1..n_N) with sum M, lexicographic order."""
    if N == 1:
        return np.array([[M]], dtype=np.int64)
    out = []
    for bars in itertools.combinations(range(M + N - 1), N - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(M + N - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64)


def _node_factors(spec: NetworkSpec, rho: np.ndarray, M: int) -> list[np.ndarray]:
    """f_i(n) = rho_i^n / (mu_i(1)...mu_i(n)), n = 0..M."""
    out = []
    for i in range(spec.N):
        f = np.ones(M + 1)
        for n in range(1, M + 1):
            f[n] = f[n - 1] * rho[i] / spec.service_rate(i, n)
        out.append(f)
    return out


@dataclass(frozen=True)
class ClosedStationary:
    M: int
    rho: np.ndarray
    loads: np.ndarray | None  # r_i = rho_i / mu_i for constant rates
    log_Z: float
    means: np.ndarray
    marginals: np.ndarray  # marginals[i, k] = P(n_i = k)
    states: np.ndarray | None = None
    probs: np.ndarray | None = None

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def prob(self, state) -> float:
        if self.states is None:
            raise UnsupportedConfiguration("state space was not enumerated")
        idx = np.flatnonzero(np.all(self.states == np.asarray(state), axis=1))
        return float(self.probs[idx[0]]) if idx.size else 0.0


def stationary_closed(spec: NetworkSpec, M: int, enumerate_limit: int = 200_000) -> ClosedStationary:
    """Product-form law on S_M with means and marginals.

    The full law is enumerated when |S_M| <= enumerate_limit; otherwise only
    means and marginals are returned.
    """
    if not spec.is_closed:
        raise UnsupportedConfiguration("stationary_closed needs a closed network")
    if M < 0:
        raise ParameterError("M must be nonnegative")
    rho = solve_traffic_closed(spec.P).rho
    n = spec.N
    if spec.constant_rates:
        r = rho / np.array([t[0] for t in spec.mu])
        log_z, means, marg = load_means(r, M)
        factors = None
    else:
        r = None
        factors = _node_factors(spec, rho, M)
        z = partition_table_general(factors, M)
        marg = np.zeros((n, M + 1))
        for i in range(n):
            zc = partition_table_general([f for j, f in enumerate(factors) if j != i], M)
            marg[i] = factors[i] * zc[::-1] / z[M]
        means = marg @ np.arange(M + 1)
        log_z = math.log(z[M])
    states = probs = None
    if math.comb(M + n - 1, n - 1) <= enumerate_limit:
        states = enumerate_states(n, M)
        if r is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                logw = np.where(states > 0, states * np.log(r)[None, :], 0.0).sum(axis=1)
        else:
            logw = np.zeros(len(states))
            for i in range(n):
                logw += np.log(factors[i][states[:, i]])
        probs = np.exp(logw - log_z)
    return ClosedStationary(M, rho, r, log_z, means, marg, states, probs)


# ---------------------------------------------------------------------------
# Generators for brute-force checks
# ---------------------------------------------------------------------------
def generator_closed(spec: NetworkSpec, M: int):
    """(states, Q) with Q the CSR generator on S_M built from rates mu_i(n_i) p_ij."""
    states = enumerate_states(spec.N, M)
    index = {tuple(s): k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for a, s in enumerate(states):
        out = 0.0
        for i in range(spec.N):
            if s[i] == 0:
                continue
            mu = spec.service_rate(i, int(s[i]))
            for j in range(spec.N):
                p = spec.P[i, j]
                if p == 0 or i == j:
                    continue
                t = s.copy()
                t[i] -= 1
                t[j] += 1
                rate = mu * p
                rows.append(a)
                cols.append(index[tuple(t)])
                vals.append(rate)
                out += rate
        rows.append(a)
        cols.append(a)
        vals.append(-out)
    q = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return states, q


def generator_open_truncated(spec: NetworkSpec, cap: int):
    """Generator of the open network restricted to the box n_i <= cap.

    Transitions that would leave the box are suppressed.
    """
    n = spec.N
    shape = (cap + 1,) * n
    total = (cap + 1) ** n
    states = np.array(np.unravel_index(np.arange(total), shape)).T
    rows, cols, vals = [], [], []
    exits = spec.exit_probs

    def add(a, t, rate):
        if rate <= 0 or np.any(t > cap):
            return 0.0
        rows.append(a)
        cols.append(int(np.ravel_multi_index(tuple(t), shape)))
        vals.append(rate)
        return rate

    for a, s in enumerate(states):
        out = 0.0
        for i in range(n):
            t = s.copy()
            t[i] += 1
            out += add(a, t, spec.lambda_ext[i])
            if s[i] == 0:
                continue
            mu = spec.service_rate(i, int(s[i]))
            t = s.copy()
            t[i] -= 1
            out += add(a, t, mu * exits[i])
            for j in range(n):
                if j == i or spec.P[i, j] == 0:
                    continue
                t = s.copy()
                t[i] -= 1
                t[j] += 1
                out += add(a, t, mu * spec.P[i, j])
        rows.append(a)
        cols.append(a)
        vals.append(-out)
    q = sparse.csr_matrix((vals, (rows, cols)), shape=(total, total))
    return states, q


def stationary_from_generator(q) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 by a sparse direct method."""
    q = sparse.csr_matrix(q)
    a = q.T.tolil()
    a[0, :] = 1.0
    b = np.zeros(q.shape[0])
    b[0] = 1.0
    pi = spsolve(a.tocsc(), b)
    return np.asarray(pi)


# ---------------------------------------------------------------------------
# Open networks
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class OpenStationary:
    rho: np.ndarray
    r: np.ndarray
    ergodic: bool
    unstable_nodes: tuple
    means: np.ndarray | None

    def marginal(self, i: int, k) -> np.ndarray:
        if not self.ergodic:
            raise UnsupportedConfiguration("network is not ergodic")
        k = np.asarray(k)
        return (1 - self.r[i]) * self.r[i] ** k

    def pmf(self, state) -> float:
        if not self.ergodic:
            raise UnsupportedConfiguration("network is not ergodic")
        s = np.asarray(state)
        return float(np.prod((1 - self.r) * self.r**s))

    def report(self) -> str:
        if self.ergodic:
            return "ergodic: product of geometric laws"
        nodes = ", ".join(str(i + 1) for i in self.unstable_nodes)
        return f"not ergodic: r_i >= 1 at node(s) {nodes}; their queues grow without bound"


def stationary_open(spec: NetworkSpec) -> OpenStationary:
    """Product of geometrics when every r_i < 1, else a non-ergodic report."""
    if spec.is_closed:
        raise UnsupportedConfiguration("stationary_open needs an open network")
    if not spec.constant_rates:
        raise UnsupportedConfiguration("open-network product form implemented for constant rates only")
    rho = solve_traffic_open(spec.lambda_ext, spec.P).rho
    mu = np.array([t[0] for t in spec.mu])
    r = rho / mu
    # tolerance absorbs the rounding of the linear solve at the boundary r = 1
    bad = tuple(int(i) for i in np.flatnonzero(r >= 1.0 - 1e-12))
    if bad:
        return OpenStationary(rho, r, False, bad, None)
    return OpenStationary(rho, r, True, (), r / (1 - r))


# ---------------------------------------------------------------------------
# Simulation and estimation
# ---------------------------------------------------------------------------
@dataclass
class CTMCRun:
    T: float
    events: int
    occupation: np.ndarray  # occupation[i, k]: time fraction with n_i = k (last bin: >=)
    jumps: np.ndarray  # (N+1, N+1), index 0 = outside
    busy_time: np.ndarray
    final_state: np.ndarray
    joint: np.ndarray | None = None  # time fractions over the (cap+1)^N box, then overflow
    joint_cap: int = -1

    def time_weighted_mean(self) -> np.ndarray:
        k = np.arange(self.occupation.shape[1])
        return self.occupation @ k

    def joint_law(self) -> np.ndarray:
        if self.joint is None:
            raise UnsupportedConfiguration("joint occupation was not recorded")
        n = self.occupation.shape[0]
        return self.joint[:-1].reshape((self.joint_cap + 1,) * n, order="F")


def _route_cdf(spec: NetworkSpec) -> np.ndarray:
    n = spec.N
    full = np.hstack([spec.P, spec.exit_probs[:, None]])
    cdf = np.cumsum(full, axis=1)
    for i in range(n):
        if spec.exit_probs[i] <= ROW_TOL:
            last = int(np.flatnonzero(spec.P[i] > 0)[-1]) if np.any(spec.P[i] > 0) else n - 1
            cdf[i, last:] = 1.0
        cdf[i, -1] = 1.0
    return np.ascontiguousarray(cdf)


def simulate_ctmc(
    spec: NetworkSpec,
    t_max: float,
    rng: np.random.Generator,
    M: int | None = None,
    initial=None,
    occ_cap: int = 200,
    joint_cap: int = -1,
    max_events: int | None = None,
) -> CTMCRun:
    """Exact-clock simulation; counts every transition including entries/exits."""
    n = spec.N
    if initial is not None:
        state = np.array(initial, dtype=np.int64)
        if state.shape != (n,) or np.any(state < 0):
            raise ParameterError("initial state must be N nonnegative integers")
    elif spec.is_closed:
        if M is None or M < 0:
            raise ParameterError("closed network simulation needs M >= 0 or an initial state")
        state = np.zeros(n, dtype=np.int64)
        for c in range(M):
            state[c % n] += 1
    else:
        state = np.zeros(n, dtype=np.int64)
    if joint_cap >= 0 and (joint_cap + 1) ** n > 10_000_000:
        raise ParameterError("joint occupation box too large")
    occ = np.zeros((n, occ_cap + 1))
    joint = np.zeros((joint_cap + 1) ** n + 1) if joint_cap >= 0 else np.zeros(1)
    jumps = np.zeros((n + 1, n + 1), dtype=np.int64)
    busy = np.zeros(n)
    t, events = _k.ctmc_run(
        rng, state, _route_cdf(spec), spec.mu_matrix(), np.array(spec.lambda_ext, dtype=float),
        0.0, float(t_max), int(max_events if max_events is not None else 2**62),
        occ, joint, int(joint_cap), jumps, busy,
    )
    T = float(t)
    if T > 0:
        occ /= T
        joint /= T
    return CTMCRun(T, int(events), occ, jumps, busy, state, joint if joint_cap >= 0 else None, joint_cap)


@dataclass(frozen=True)
class ParameterEstimate:
    P_hat: np.ndarray  # N x N, NaN rows where unidentifiable
    exit_hat: np.ndarray
    mu_hat: np.ndarray  # (1/T) sum_j N_ij, valid for nodes busy all the time
    mu_hat_busy: np.ndarray | None  # departures / busy time (extension)
    unidentifiable: tuple


def estimate_parameters(jumps, T: float, busy_time=None) -> ParameterEstimate:
    """Plug-in estimates p_ij = N_ij / sum_j N_ij and mu_i = sum_j N_ij / T.

    ``jumps`` is (N+1) x (N+1) with index 0 the outside world (entries in
    row 0, exits in column 0).  Rows with no departures are flagged.
    """
    J = np.asarray(jumps, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] < 2:
        raise ParameterError("jump counts must be an (N+1) x (N+1) matrix")
    if not T > 0:
        raise ParameterError("T must be positive")
    dep = J[1:, :].sum(axis=1)  # departures from node i to nodes and exit
    bad = tuple(int(i) for i in np.flatnonzero(dep == 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        P_hat = J[1:, 1:] / dep[:, None]
        exit_hat = J[1:, 0] / dep
        mu_busy = None
        if busy_time is not None:
            b = np.asarray(busy_time, dtype=float)
            mu_busy = np.where(b > 0, dep / b, np.nan)
    P_hat[list(bad), :] = np.nan
    exit_hat[list(bad)] = np.nan
    return ParameterEstimate(P_hat, exit_hat, dep / T, mu_busy, bad)
