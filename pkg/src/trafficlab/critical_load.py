"""Critical car density of large closed networks.

A closed network with N nodes and M cars has product-form law with
partition function Z_{N,M} = [z^M] prod_i 1 / (1 - z r_i).  As N grows with
M / N -> lambda and the empirical load measure converging to I, the
saddle point z0 of z h(z) = lambda with h(z) = int r / (1 - z r) dI(r)
controls everything: below lambda_cr = h(1-) queues stay bounded and are
asymptotically independent geometric(z0 r_i); above it the cars pile up
at the maximal-load nodes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .distributions import ParameterError
from .linear_road import GeometricLaw
from .qnet import load_means, log_partition_table
from .quadrature import adaptive_simpson

__all__ = [
    "DomainError",
    "RegimeError",
    "NearCriticalWarning",
    "LimitMeasure",
    "parse_measure",
    "sample_measure",
    "h_of_z",
    "lambda_critical",
    "lambda_critical_limit",
    "LoadProfile",
    "S_N",
    "dS_N",
    "d2S_N",
    "saddle_point_finite",
    "z0_limit",
    "SaddleReport",
    "partition_asymptotics",
    "Marginals",
    "limiting_marginals",
    "JamReport",
    "classify_jams",
    "exact_means_sweep",
    "lambda_critical_infinite_server",
    "log_grand_partition_infinite_server",
    "grand_partition_coefficients",
    "joint_marginal_law",
]

QUAD_TOL = 1e-12
NEAR_CRITICAL = 1e-6


class DomainError(ValueError):
    """Argument outside the domain of the function (e.g. z >= 1)."""


class RegimeError(ValueError):
    """Operation only defined below the critical density."""


class NearCriticalWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# Limit measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LimitMeasure:
    """Probability measure on [0, 1]: atoms (r, mass) plus densities given
    as polynomials (ascending coefficients) on subintervals."""

    atoms: tuple = ()
    pieces: tuple = ()  # (lo, hi, coeffs)

    def __post_init__(self):
        atoms = tuple((float(r), float(m)) for r, m in self.atoms)
        pieces = tuple((float(lo), float(hi), tuple(float(c) for c in cs)) for lo, hi, cs in self.pieces)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        for r, m in atoms:
            if not (0.0 <= r <= 1.0):
                raise ParameterError(f"atom at {r} outside [0, 1]")
            if m < 0:
                raise ParameterError(f"negative atom mass {m}")
        for lo, hi, cs in pieces:
            if not (0.0 <= lo < hi <= 1.0):
                raise ParameterError(f"density piece [{lo}, {hi}] outside [0, 1]")
            grid = np.linspace(lo, hi, 65)
            if np.any(P.polyval(grid, cs) < -1e-12):
                raise ParameterError(f"density negative on [{lo}, {hi}]")
        if abs(self.total_mass() - 1.0) > 1e-12:
            raise ParameterError(f"total mass {self.total_mass()!r} differs from 1")

    def total_mass(self) -> float:
        tot = math.fsum(m for _, m in self.atoms)
        for lo, hi, cs in self.pieces:
            anti = P.polyint(cs)
            tot += float(P.polyval(hi, anti) - P.polyval(lo, anti))
        return tot

    @property
    def is_atomic(self) -> bool:
        return not self.pieces

    @property
    def is_zero(self) -> bool:
        """True for the point mass at 0."""
        return not self.pieces and all(r == 0.0 or m == 0.0 for r, m in self.atoms)

    def sup(self) -> float:
        """Right end of the support."""
        s = [r for r, m in self.atoms if m > 0] + [hi for _, hi, _ in self.pieces]
        return max(s) if s else 0.0

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for r, m in self.atoms:
            out = out + m * (x >= r)
        for lo, hi, cs in self.pieces:
            anti = P.polyint(cs)
            xc = np.clip(x, lo, hi)
            out = out + (P.polyval(xc, anti) - P.polyval(lo, anti))
        return out

    def to_text(self) -> str:
        lines = [f"atom {r!r} {m!r}" for r, m in self.atoms]
        lines += ["density " + " ".join(repr(v) for v in (lo, hi, *cs)) for lo, hi, cs in self.pieces]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"atoms": [list(a) for a in self.atoms], "pieces": [[lo, hi, list(cs)] for lo, hi, cs in self.pieces]}

    @classmethod
    def from_dict(cls, d: dict) -> "LimitMeasure":
        extra = set(d) - {"atoms", "pieces"}
        if extra:
            raise ParameterError(f"unknown measure field(s): {sorted(extra)}")
        return cls(tuple(tuple(a) for a in d.get("atoms", ())), tuple(tuple(p) for p in d.get("pieces", ())))

    @classmethod
    def uniform(cls) -> "LimitMeasure":
        return cls(pieces=((0.0, 1.0, (1.0,)),))

    @classmethod
    def point(cls, r: float) -> "LimitMeasure":
        return cls(atoms=((r, 1.0),))


def parse_measure(text: str) -> LimitMeasure:
    """Read lines ``atom r mass`` and ``density lo hi c0 c1 ...``; '#' starts a comment."""
    atoms, pieces = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *vals = line.split()
        try:
            nums = [float(v) for v in vals]
        except ValueError:
            raise ParameterError(f"line {n}: non-numeric value") from None
        if kind == "atom" and len(nums) == 2:
            atoms.append(tuple(nums))
        elif kind == "density" and len(nums) >= 3:
            pieces.append((nums[0], nums[1], tuple(nums[2:])))
        else:
            raise ParameterError(f"line {n}: expected 'atom r mass' or 'density lo hi c0 ...'")
    return LimitMeasure(tuple(atoms), tuple(pieces))


def sample_measure(loads) -> LimitMeasure:
    """Empirical measure of the loads, mass 1/N per entry."""
    r = np.asarray(loads, dtype=float).ravel()
    if r.size == 0:
        raise ParameterError("empty load vector")
    if np.any((r < 0) | (r > 1)) or not np.all(np.isfinite(r)):
        raise ParameterError("loads must lie in [0, 1]")
    vals, counts = np.unique(r, return_counts=True)
    masses = counts / r.size
    # absorb rounding so the masses sum to 1 exactly in fsum
    masses[-1] = 1.0 - math.fsum(masses[:-1])
    return LimitMeasure(tuple(zip(vals.tolist(), masses.tolist())))


# ---------------------------------------------------------------------------
# h and the critical density
# ---------------------------------------------------------------------------
def h_of_z(I: LimitMeasure, z: float) -> float:
    """h(z) = int r / (1 - z r) dI(r), 0 <= z < 1."""
    if not (0.0 <= z < 1.0):
        raise DomainError(f"h(z) needs 0 <= z < 1, got {z}")
    tot = math.fsum(m * r / (1.0 - z * r) for r, m in I.atoms)
    for lo, hi, cs in I.pieces:
        if z > 0.5:
            # near the pole at 1/z the integrand peaks like 1/(1-z); integrate exactly
            tot += sum(c * _moment_over_pole(k + 1, z, lo, hi) for k, c in enumerate(cs))
            continue
        f = lambda s, cs=cs: float(P.polyval(s, cs)) * s / (1.0 - z * s)
        tot += adaptive_simpson(f, lo, hi, QUAD_TOL)
    return tot


def _moment_over_pole(n: int, z: float, lo: float, hi: float) -> float:
    """int_lo^hi s^n / (1 - z s) ds for 0 < z < 1, via u = 1 - z s."""
    u_lo, u_hi = 1.0 - z * lo, 1.0 - z * hi
    acc = math.log1p(-z * lo) - math.log1p(-z * hi)
    for j in range(1, n + 1):
        acc += math.comb(n, j) * (-1) ** j * (u_lo**j - u_hi**j) / j
    return acc / z ** (n + 1)


def lambda_critical(I: LimitMeasure) -> float:
    """lambda_cr = h(1-), possibly infinite.

    Atoms contribute mass r / (1 - r) (infinite at r = 1).  A density piece
    reaching 1 diverges logarithmically unless its polynomial vanishes at 1,
    in which case p(r) / (1 - r) is again a polynomial.
    """
    tot = 0.0
    for r, m in I.atoms:
        if m == 0:
            continue
        if r >= 1.0:
            return math.inf
        tot += m * r / (1.0 - r)
    for lo, hi, cs in I.pieces:
        if hi < 1.0:
            f = lambda s, cs=cs: float(P.polyval(s, cs)) * s / (1.0 - s)
            tot += adaptive_simpson(f, lo, hi, QUAD_TOL)
            continue
        if abs(P.polyval(1.0, cs)) > 1e-14:
            return math.inf
        q, _ = P.polydiv(cs, (1.0, -1.0))  # p(r) = (1 - r) q(r)
        anti = P.polyint(P.polymulx(q))
        tot += float(P.polyval(hi, anti) - P.polyval(lo, anti))
    return tot


def lambda_critical_limit(I: LimitMeasure, k_max: int = 10, rel_tol: float = 1e-6) -> float:
    """h(1-) from h(1 - 10^-k), k = 1..k_max, reporting inf when the
    increments stop shrinking."""
    prev = h_of_z(I, 0.9)
    inc = math.inf
    for k in range(2, k_max + 1):
        cur = h_of_z(I, 1.0 - 10.0**-k)
        inc_new = cur - prev
        if inc_new <= rel_tol * (1.0 + abs(cur)):
            return cur
        if k >= 4 and inc_new > 0.5 * inc:
            return math.inf
        inc, prev = inc_new, cur
    return math.inf


def z0_limit(I: LimitMeasure, lam: float) -> float:
    """Root of z h(z) = lambda in (0, 1); 1 when lambda >= lambda_cr."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    if I.is_zero or lam >= lambda_critical(I):
        return 1.0
    g = lambda z: z * h_of_z(I, z) - lam
    hi = 1.0 - 1e-3
    while g(hi) <= 0:
        hi = 1.0 - (1.0 - hi) * 1e-3
        if 1.0 - hi < 1e-15:
            return 1.0
    return brentq(g, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# Finite networks
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LoadProfile:
    """Per-node loads r_i normalized to max 1, with M cars on N nodes.

    ``lam`` is the nominal density; eps = M / (N lam) - 1.
    """

    loads: np.ndarray
    M: int
    lam: float | None = None

    def __post_init__(self):
        r = np.asarray(self.loads, dtype=float).ravel()
        if r.size == 0 or np.any((r < 0) | (r > 1)) or not np.all(np.isfinite(r)):
            raise ParameterError("loads must lie in [0, 1]")
        if r.max() != 1.0:
            raise ParameterError("loads must be normalized so that max r = 1")
        if int(self.M) != self.M or self.M < 0:
            raise ParameterError("M must be a nonnegative integer")
        object.__setattr__(self, "loads", r)
        object.__setattr__(self, "M", int(self.M))
        if self.lam is None:
            object.__setattr__(self, "lam", self.M / r.size)
        elif not self.lam > 0:
            raise ParameterError("lambda must be positive")

    @classmethod
    def from_raw(cls, raw_loads, M: int, lam: float | None = None) -> "LoadProfile":
        """Normalize rho_i tau_i by their maximum."""
        raw = np.asarray(raw_loads, dtype=float)
        if raw.size == 0 or np.any(raw < 0) or not raw.max() > 0:
            raise ParameterError("raw loads must be nonnegative with a positive maximum")
        return cls(raw / raw.max(), M, lam)

    @property
    def N(self) -> int:
        return self.loads.size

    @property
    def density(self) -> float:
        return self.M / self.N

    @property
    def eps(self) -> float:
        return self.density / self.lam - 1.0

    def measure(self) -> LimitMeasure:
        return sample_measure(self.loads)


def S_N(profile: LoadProfile, z: float) -> float:
    """-(M/N) ln z - (1/N) sum ln(1 - z r_i)."""
    r = profile.loads
    return -profile.density * math.log(z) - float(np.log1p(-z * r).sum()) / profile.N


def dS_N(profile: LoadProfile, z: float) -> float:
    r = profile.loads
    return -profile.density / z + float((r / (1.0 - z * r)).sum()) / profile.N


def d2S_N(profile: LoadProfile, z: float) -> float:
    r = profile.loads
    return profile.density / z**2 + float((r**2 / (1.0 - z * r) ** 2).sum()) / profile.N


def saddle_point_finite(profile: LoadProfile) -> float:
    """Unique root of S_N'(z) = 0 in (0, 1); 0 when M = 0."""
    if profile.M == 0:
        return 0.0
    f = lambda z: dS_N(profile, z)
    lo = 1e-300
    hi = 1.0 - 1e-12
    return brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class SaddleReport:
    z0: float
    lambda_cr: float
    S: float
    S2: float
    log_Z: float
    regime: str  # "subcritical" or "critical"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("z0", "lambda_cr", "S", "S2", "log_Z", "regime")}


def partition_asymptotics(profile: LoadProfile) -> SaddleReport:
    """ln Z_{N,M} ~ N S_N(z0) - ln z0 - (1/2) ln(2 pi N S_N''(z0))."""
    if profile.M == 0:
        raise DomainError("asymptotics need M >= 1")
    z0 = saddle_point_finite(profile)
    if z0 > 1.0 - NEAR_CRITICAL:
        warnings.warn(f"saddle point {z0!r} within {NEAR_CRITICAL} of 1; Gaussian approximation degrades",
                      NearCriticalWarning, stacklevel=2)
    s = S_N(profile, z0)
    s2 = d2S_N(profile, z0)
    log_z = profile.N * s - math.log(z0) - 0.5 * math.log(2.0 * math.pi * profile.N * s2)
    # the empirical measure with a node at r = 1 is never supercritical;
    # compare against the measure without the maximal nodes instead
    r = profile.loads
    rest = r[r < 1.0]
    lam_cr = math.fsum((rest / (1.0 - rest)).tolist()) / profile.N
    regime = "subcritical" if profile.density < lam_cr else "critical"
    return SaddleReport(z0, lam_cr, s, s2, log_z, regime)


# ---------------------------------------------------------------------------
# Limits of marginals and jams
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Marginals:
    z0: float
    r: np.ndarray
    means: np.ndarray
    laws: tuple

    def pmf(self, i: int, n) -> np.ndarray:
        return self.laws[i].pmf(n)


def limiting_marginals(I: LimitMeasure, lam: float, r_subset) -> Marginals:
    """Independent geometric(z0 r_i) queues in the subcritical limit."""
    lam_cr = lambda_critical(I)
    if lam >= lam_cr:
        raise RegimeError(f"lambda = {lam} >= lambda_cr = {lam_cr}; use classify_jams")
    z0 = z0_limit(I, lam)
    r = np.asarray(r_subset, dtype=float).ravel()
    if np.any((r < 0) | (r > 1)):
        raise ParameterError("loads must lie in [0, 1]")
    q = z0 * r
    return Marginals(z0, r, q / (1.0 - q), tuple(GeometricLaw(float(x)) for x in q))


def exact_means_sweep(loads, M_values) -> np.ndarray:
    """Exact per-node mean queue lengths for each M (rows) by convolution."""
    r = np.asarray(loads, dtype=float)
    return np.array([load_means(r, int(M))[1] for M in M_values])


@dataclass(frozen=True)
class JamReport:
    regime: str  # "bounded" or "jam"
    lambda_cr: float
    bound: float | None = None  # limiting sup of means (heuristic witness)
    jam_nodes: tuple = ()
    M_values: tuple = ()
    evidence: np.ndarray | None = None  # exact means at the jam nodes, rows follow M_values
    monotone: bool | None = None


def classify_jams(profile: LoadProfile | None = None, I: LimitMeasure | None = None,
                  lam: float | None = None, M_values=None) -> JamReport:
    """Bounded queues below lambda_cr, jams at the maximal-load nodes above.

    With a profile, the measure is its empirical measure without the nodes
    at r = 1 (their mass vanishes as N grows) and exact means at the
    maximal nodes are swept over ``M_values`` as finite-N evidence.
    """
    if profile is None and (I is None or lam is None):
        raise ParameterError("need a profile or a measure and a density")
    if profile is not None:
        r = profile.loads
        jam_nodes = tuple(int(i) for i in np.flatnonzero(r == 1.0))
        rest = r[r < 1.0]
        lam_cr = math.fsum((rest / (1.0 - rest)).tolist()) / profile.N
        lam = profile.density if lam is None else lam
        evidence = None
        monotone = None
        if M_values is not None:
            M_values = tuple(int(m) for m in M_values)
            evidence = exact_means_sweep(r, M_values)[:, list(jam_nodes)]
            monotone = bool(np.all(np.diff(evidence, axis=0) >= -1e-12))
        if lam < lam_cr:
            # z0 h(z0) = lam over the non-maximal nodes
            z0 = brentq(lambda z: z * float((rest / (1 - z * rest)).sum()) / profile.N - lam,
                        0.0, 1.0 - 1e-15, xtol=1e-15) if rest.size else 1.0
            bound = float(np.max(z0 * rest / (1 - z0 * rest))) if rest.size else 0.0
            return JamReport("bounded", lam_cr, bound, jam_nodes, M_values or (), evidence, monotone)
        return JamReport("jam", lam_cr, None, jam_nodes, M_values or (), evidence, monotone)
    lam_cr = lambda_critical(I)
    if lam < lam_cr:
        z0 = z0_limit(I, lam)
        top = I.sup()
        return JamReport("bounded", lam_cr, z0 * top / (1.0 - z0 * top))
    return JamReport("jam", lam_cr, None, (I.sup(),))


# ---------------------------------------------------------------------------
# Infinite-server generalization and generating functions
# ---------------------------------------------------------------------------
def lambda_critical_infinite_server(I: LimitMeasure, alpha: float) -> float:
    """1 / alpha + h(1-) for the rescaled loads q = r / p_N, p_N N -> alpha."""
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    return (0.0 if math.isinf(alpha) else 1.0 / alpha) + lambda_critical(I)


def log_grand_partition_infinite_server(w: float, q, p_N: float) -> float:
    """ln Xi(w) = w / p_N - sum ln(1 - w q_i)."""
    q = np.asarray(q, dtype=float)
    if not (0 <= w and np.all(w * q < 1)):
        raise DomainError("need w q_i < 1 for all i")
    return w / p_N - float(np.log1p(-w * q).sum())


def grand_partition_coefficients(r, M: int) -> np.ndarray:
    """Coefficients of prod_i 1 / (1 - z r_i) up to z^M, by power-series products."""
    r = np.asarray(r, dtype=float)
    c = np.zeros(M + 1)
    c[0] = 1.0
    powers = np.arange(M + 1)
    for ri in r:
        geo = ri**powers
        c = np.array([np.dot(c[: m + 1], geo[m::-1]) for m in range(M + 1)])
    return c


def joint_marginal_law(r, M: int, K: int) -> np.ndarray:
    """P(n_1, ..., n_K) for the first K nodes, shape (M+1,)*K.

    P = prod_{i<=K} r_i^{n_i} Z_rest(M - sum n) / Z(M), with Z_rest the
    partition function of the remaining nodes.
    """
    r = np.asarray(r, dtype=float)
    if not 1 <= K <= r.size:
        raise ParameterError("K must be between 1 and N")
    lz = float(log_partition_table(r, M)[M])
    rest = r[K:]
    lz_rest = log_partition_table(rest, M) if rest.size else np.where(np.arange(M + 1) == 0, 0.0, -np.inf)
    grids = np.meshgrid(*([np.arange(M + 1)] * K), indexing="ij")
    total = sum(grids)
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = sum(np.where(g > 0, g * math.log(ri) if ri > 0 else -np.inf, 0.0) for g, ri in zip(grids, r[:K]))
    out = np.zeros(total.shape)
    ok = total <= M
    out[ok] = np.exp(logw[ok] + lz_rest[M - total[ok]] - lz)
    return out
