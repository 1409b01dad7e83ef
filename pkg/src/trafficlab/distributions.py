"""Univariate laws on [0, inf] used for gaps, lifetimes, route lengths and marks.

Every law exposes a right-continuous cdf, its first two moments, a sampler,
and the pieces needed for residual-life (equilibrium) computations:
``limited_mean(s) = E[min(X, s)]`` and a sampler for the size-biased law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "DistributionSpec",
    "Exponential",
    "Deterministic",
    "Uniform",
    "Discrete",
    "Empirical",
    "ParameterError",
    "NO_BYPASS",
    "distribution_from_dict",
]


class ParameterError(ValueError):
    """Raised when a model parameter is outside its admissible range."""


class DistributionSpec:
    """Base class; concrete laws are the frozen dataclasses below."""

    kind: str = "abstract"

    # -- interface -------------------------------------------------------
    def cdf(self, x):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def limited_mean(self, s):
        """E[min(X, s)] for s >= 0 (vectorized)."""
        raise NotImplementedError

    def size_biased_sample(self, rng: np.random.Generator, size=None):
        """Sample from x dG(x) / E[X]."""
        raise NotImplementedError

    def scaled(self, c: float) -> "DistributionSpec":
        """Law of c*X for c > 0."""
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the cdf is not smooth (atoms, support ends)."""
        return ()

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    # -- derived ---------------------------------------------------------
    def sf(self, x):
        return 1.0 - self.cdf(x)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def is_positive(self) -> bool:
        """True when P(X <= 0) = 0."""
        return float(self.cdf(0.0)) == 0.0

    def equilibrium_cdf(self, s):
        """cdf of the residual life: (1/m) * integral_0^s (1 - G(u)) du."""
        m = self.mean
        if not (0 < m < math.inf):
            raise ParameterError("residual life needs a positive finite mean")
        return np.asarray(self.limited_mean(s), dtype=float) / m

    def equilibrium_pdf(self, s):
        m = self.mean
        if not (0 < m < math.inf):
            raise ParameterError("residual life needs a positive finite mean")
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, self.sf(s), 0.0) / m

    def equilibrium_mean(self) -> float:
        """E of the residual life, m2 / (2 m)."""
        return self.second_moment / (2.0 * self.mean)

    def equilibrium_sample(self, rng: np.random.Generator, size=None):
        """Residual life as U * (size-biased draw); exact for every kind."""
        xb = self.size_biased_sample(rng, size)
        u = rng.random(size)
        return u * xb

    def equilibrium_quantile(self, p: float) -> float:
        """Inverse of equilibrium_cdf by bisection (cdf is continuous)."""
        lo, hi = 0.0, max(self.quantile(min(p, 1 - 1e-16)), 1e-300)
        while float(self.equilibrium_cdf(hi)) < p:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.equilibrium_cdf(mid)) < p:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        return hi


def _check_nonneg(name: str, value: float) -> None:
    if not (value >= 0) or math.isnan(value):
        raise ParameterError(f"{name} must be nonnegative, got {value!r}")


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float
    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not (self.rate > 0) or math.isinf(self.rate):
            raise ParameterError(f"exponential rate must be positive and finite, got {self.rate!r}")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def second_moment(self):
        return 2.0 / self.rate**2

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def quantile(self, p):
        return -math.log1p(-p) / self.rate if p < 1 else math.inf

    def limited_mean(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return -np.expm1(-self.rate * s) / self.rate

    def size_biased_sample(self, rng, size=None):
        return rng.gamma(2.0, 1.0 / self.rate, size)

    def scaled(self, c):
        return Exponential(self.rate / c)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(DistributionSpec):
    """Point mass at ``value``; ``value = inf`` encodes 'never happens'."""

    value: float
    kind: str = field(default="deterministic", init=False)

    def __post_init__(self):
        _check_nonneg("deterministic value", self.value)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.value).astype(float)

    @property
    def mean(self):
        return self.value

    @property
    def second_moment(self):
        return self.value**2

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, self.value, dtype=float)

    def quantile(self, p):
        return self.value

    def limited_mean(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return np.minimum(s, self.value)

    def size_biased_sample(self, rng, size=None):
        return self.sample(rng, size)

    def scaled(self, c):
        return Deterministic(self.value * c)

    def breakpoints(self):
        return (self.value,) if math.isfinite(self.value) else ()

    def to_dict(self):
        return {"kind": "deterministic", "value": self.value}


NO_BYPASS = Deterministic(math.inf)


@dataclass(frozen=True)
class Uniform(DistributionSpec):
    lo: float
    hi: float
    kind: str = field(default="uniform", init=False)

    def __post_init__(self):
        _check_nonneg("uniform lo", self.lo)
        if not (self.hi >= self.lo) or math.isinf(self.hi):
            raise ParameterError(f"uniform needs lo <= hi < inf, got ({self.lo}, {self.hi})")

    @property
    def _width(self):
        return self.hi - self.lo

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self._width == 0:
            return (x >= self.lo).astype(float)
        return np.clip((x - self.lo) / self._width, 0.0, 1.0)

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self):
        a, b = self.lo, self.hi
        return (a * a + a * b + b * b) / 3.0

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def quantile(self, p):
        return self.lo + p * self._width

    def limited_mean(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        a, b = self.lo, self.hi
        if self._width == 0:
            return np.minimum(s, a)
        mid = ((s * s - a * a) / 2.0 + s * (b - s)) / (b - a)
        return np.where(s <= a, s, np.where(s >= b, self.mean, mid))

    def size_biased_sample(self, rng, size=None):
        a, b = self.lo, self.hi
        u = rng.random(size)
        return np.sqrt(a * a + u * (b * b - a * a))

    def scaled(self, c):
        return Uniform(self.lo * c, self.hi * c)

    def breakpoints(self):
        return (self.lo, self.hi)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Discrete(DistributionSpec):
    atoms: tuple
    weights: tuple
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if atoms.ndim != 1 or atoms.size == 0 or atoms.shape != weights.shape:
            raise ParameterError("discrete law needs matching nonempty atoms and weights")
        if np.any(atoms < 0) or np.any(~np.isfinite(atoms)):
            raise ParameterError("discrete atoms must be finite and nonnegative")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError("discrete weights must be nonnegative and sum to 1")
        order = np.argsort(atoms, kind="stable")
        object.__setattr__(self, "atoms", tuple(float(a) for a in atoms[order]))
        object.__setattr__(self, "weights", tuple(float(w) for w in weights[order]))

    @property
    def _a(self):
        return np.asarray(self.atoms)

    @property
    def _w(self):
        return np.asarray(self.weights)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cw = np.concatenate([[0.0], np.cumsum(self._w)])
        return np.minimum(cw[np.searchsorted(self._a, x, side="right")], 1.0)

    @property
    def mean(self):
        return float(self._w @ self._a)

    @property
    def second_moment(self):
        return float(self._w @ self._a**2)

    def sample(self, rng, size=None):
        return rng.choice(self._a, size=size, p=self._w)

    def quantile(self, p):
        cw = np.cumsum(self._w)
        idx = int(np.searchsorted(cw, p - 1e-15, side="left"))
        return float(self._a[min(idx, len(self.atoms) - 1)])

    def limited_mean(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return np.minimum(s[..., None], self._a) @ self._w

    def size_biased_sample(self, rng, size=None):
        p = self._w * self._a
        return rng.choice(self._a, size=size, p=p / p.sum())

    def scaled(self, c):
        return Discrete(tuple(a * c for a in self.atoms), self.weights)

    def breakpoints(self):
        return self.atoms

    def to_dict(self):
        return {"kind": "discrete", "atoms": list(self.atoms), "weights": list(self.weights)}


@dataclass(frozen=True)
class Empirical(DistributionSpec):
    """Plug-in law of observed data; cdf is the right-continuous ecdf."""

    sample_values: tuple
    kind: str = field(default="empirical", init=False)

    def __post_init__(self):
        x = np.sort(np.asarray(self.sample_values, dtype=float))
        if x.size == 0:
            raise ParameterError("empirical sample must be nonempty")
        if np.any(x < 0) or np.any(~np.isfinite(x)):
            raise ParameterError("empirical sample must be finite and nonnegative")
        object.__setattr__(self, "sample_values", tuple(float(v) for v in x))
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_cs", np.concatenate([[0.0], np.cumsum(x)]))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.searchsorted(self._x, x, side="right") / self._x.size

    @property
    def mean(self):
        return float(self._x.mean())

    @property
    def second_moment(self):
        return float(np.mean(self._x**2))

    def sample(self, rng, size=None):
        return rng.choice(self._x, size=size)

    def quantile(self, p):
        n = self._x.size
        idx = max(int(math.ceil(p * n)) - 1, 0)
        return float(self._x[min(idx, n - 1)])

    def limited_mean(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        n = self._x.size
        k = np.searchsorted(self._x, s, side="right")
        return (self._cs[k] + s * (n - k)) / n

    def size_biased_sample(self, rng, size=None):
        p = self._x / self._x.sum()
        return rng.choice(self._x, size=size, p=p)

    def scaled(self, c):
        return Empirical(tuple(v * c for v in self.sample_values))

    def breakpoints(self):
        return tuple(np.unique(self._x))

    def to_dict(self):
        return {"kind": "empirical", "sample": list(self.sample_values)}


def distribution_from_dict(d: dict[str, Any]) -> DistributionSpec:
    """Build a law from ``{"kind": ..., <params>}`` (config-file form)."""
    if isinstance(d, DistributionSpec):
        return d
    if not isinstance(d, dict) or "kind" not in d:
        raise ParameterError(f"distribution must be a mapping with a 'kind' key, got {d!r}")
    kind = d["kind"]
    params = {k: v for k, v in d.items() if k != "kind"}

    def _num(key):
        if key not in params:
            raise ParameterError(f"{kind} distribution needs '{key}'")
        v = params[key]
        return math.inf if v in ("inf", "Infinity") else float(v)

    allowed = {
        "exponential": {"rate"},
        "deterministic": {"value"},
        "uniform": {"lo", "hi"},
        "discrete": {"atoms", "weights"},
        "empirical": {"sample"},
    }
    if kind not in allowed:
        raise ParameterError(f"unknown distribution kind {kind!r}")
    extra = set(params) - allowed[kind]
    if extra:
        raise ParameterError(f"unknown keys for {kind}: {sorted(extra)}")
    if kind == "exponential":
        return Exponential(_num("rate"))
    if kind == "deterministic":
        return Deterministic(_num("value"))
    if kind == "uniform":
        return Uniform(_num("lo"), _num("hi"))
    if kind == "discrete":
        return Discrete(tuple(params["atoms"]), tuple(params["weights"]))
    return Empirical(tuple(params["sample"]))
