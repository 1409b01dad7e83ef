"""Random point configurations on a line segment: car positions.

Positions are stored ascending.  Samplers take an explicit
``numpy.random.Generator`` and never touch global random state.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, ParameterError

__all__ = [
    "PointConfiguration",
    "sample_poisson",
    "sample_stationary_renewal",
    "sample_alternating",
    "attach_marks",
    "forward_recurrence_samples",
    "UsageError",
]


class UsageError(RuntimeError):
    pass


def _window(window) -> tuple[float, float]:
    a, b = (float(w) for w in window)
    if not (b > a) or not (math.isfinite(a) and math.isfinite(b)):
        raise ParameterError(f"window must be a finite nondegenerate interval, got {window!r}")
    return a, b


@dataclass(frozen=True)
class PointConfiguration:
    positions: np.ndarray
    window: tuple[float, float]
    marks: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        a, b = _window(self.window)
        object.__setattr__(self, "window", (a, b))
        if pos.ndim != 1:
            raise ValueError("positions must be one-dimensional")
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValueError("positions must be strictly increasing")
        if pos.size and (pos[0] < a or pos[-1] > b):
            raise ValueError("positions must lie inside the window")
        if self.marks is not None:
            marks = np.asarray(self.marks, dtype=float)
            if marks.shape != pos.shape:
                raise ValueError("marks must parallel positions")
            marks.setflags(write=False)
            object.__setattr__(self, "marks", marks)

    def __len__(self):
        return int(self.positions.size)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    def count_in(self, lo: float, hi: float) -> int:
        """Number of points in [lo, hi)."""
        p = self.positions
        return int(np.searchsorted(p, hi, "left") - np.searchsorted(p, lo, "left"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        marked = self.marks is not None
        w.writerow(["index", "position"] + (["mark"] if marked else []))
        for i, x in enumerate(self.positions):
            row = [i, repr(float(x))]
            if marked:
                row.append(repr(float(self.marks[i])))
            w.writerow(row)
        buf.write(f"# window={self.window[0]!r},{self.window[1]!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PointConfiguration":
        lines = text.splitlines()
        window = None
        rows = []
        for line in lines:
            if line.startswith("# window="):
                a, b = line.split("=", 1)[1].split(",")
                window = (float(a), float(b))
            elif line and not line.startswith("#"):
                rows.append(line)
        reader = csv.DictReader(rows)
        pos, marks = [], []
        for r in reader:
            pos.append(float(r["position"]))
            if "mark" in r and r["mark"] is not None:
                marks.append(float(r["mark"]))
        if window is None:
            raise ValueError("missing window metadata")
        return cls(np.array(pos), window, np.array(marks) if marks else None)


def sample_poisson(rho: float, window, rng: np.random.Generator) -> PointConfiguration:
    """Homogeneous Poisson field of density ``rho`` on ``window``."""
    if not (rho >= 0) or math.isinf(rho):
        raise ParameterError(f"rho must be a finite nonnegative density, got {rho!r}")
    a, b = _window(window)
    n = int(rng.poisson(rho * (b - a)))
    pos = np.sort(rng.uniform(a, b, n))
    # float ties have probability ~0; drop duplicates rather than fail
    if n > 1 and not np.all(np.diff(pos) > 0):
        pos = np.unique(pos)
    return PointConfiguration(pos, (a, b))


def _check_gap(gap: DistributionSpec, name: str = "gap") -> None:
    m = gap.mean
    if not (0 < m < math.inf):
        raise ParameterError(f"{name} must have positive finite mean, got {m!r}")
    if not gap.is_positive():
        raise ParameterError(f"{name} must be supported on (0, inf)")


def _renewal_points(first: float, draw, b: float, chunk: int) -> np.ndarray:
    """Cumulative positions first, first+g1, ... up to b (inclusive)."""
    out = []
    last = first
    if first > b:
        return np.empty(0)
    out.append(np.array([first]))
    while True:
        steps = last + np.cumsum(draw(chunk))
        keep = steps[steps <= b]
        out.append(keep)
        if keep.size < steps.size:
            break
        last = steps[-1]
    return np.concatenate(out)


def sample_stationary_renewal(gap: DistributionSpec, window, rng: np.random.Generator) -> PointConfiguration:
    """Renewal field whose first point has the equilibrium delay rho*(1 - G(s))."""
    _check_gap(gap)
    a, b = _window(window)
    first = a + float(gap.equilibrium_sample(rng))
    chunk = max(16, int(1.2 * (b - a) / gap.mean) + 16)
    pos = _renewal_points(first, lambda k: gap.sample(rng, k), b, chunk)
    return PointConfiguration(pos, (a, b))


def sample_alternating(
    gap_a: DistributionSpec,
    gap_b: DistributionSpec,
    window,
    rng: np.random.Generator,
    stationary: bool = False,
) -> PointConfiguration:
    """Gaps alternate a, b, a, b, ...; by default started at the left edge with an a-gap.

    With ``stationary=True`` the left edge falls at a random phase of the
    alternating cycle (in an a-gap with probability m_a/(m_a+m_b)) and the
    first distance is the matching residual life.
    """
    _check_gap(gap_a, "gap_a")
    _check_gap(gap_b, "gap_b")
    a, b = _window(window)
    start_with_a = True
    first = None
    if stationary:
        ma, mb = gap_a.mean, gap_b.mean
        in_a = rng.random() < ma / (ma + mb)
        res = gap_a if in_a else gap_b
        first = a + float(res.equilibrium_sample(rng))
        start_with_a = not in_a
    per_cycle = gap_a.mean + gap_b.mean
    chunk = max(8, int(1.2 * (b - a) / per_cycle) + 8)

    def draw(k):
        ga = gap_a.sample(rng, k)
        gb = gap_b.sample(rng, k)
        pair = np.column_stack([ga, gb] if start_with_a else [gb, ga])
        return pair.ravel()

    if first is None:
        steps = _renewal_points(a, draw, b, chunk)[1:]
    else:
        steps = _renewal_points(first, draw, b, chunk)
    return PointConfiguration(steps, (a, b))


def attach_marks(config: PointConfiguration, mark: DistributionSpec, rng: np.random.Generator) -> PointConfiguration:
    """Attach i.i.d. marks independent of positions."""
    if config.marks is not None:
        raise UsageError("configuration is already marked")
    marks = np.asarray(mark.sample(rng, len(config)), dtype=float)
    return PointConfiguration(config.positions, config.window, marks)


def forward_recurrence_samples(
    gap: DistributionSpec, t: float, replicas: int, rng: np.random.Generator
) -> np.ndarray:
    """Distance from t to the next point of an ordinary renewal started at 0.

    The limit law as t grows is the residual life rho*(1 - G(s)); use
    t >= 20 mean gaps for the burn-in to be negligible.
    """
    _check_gap(gap)
    if replicas < 0 or t < 0:
        raise ParameterError("t and replicas must be nonnegative")
    out = np.empty(replicas)
    k = max(8, int(1.5 * t / gap.mean) + 8)
    pending = np.arange(replicas)
    last = np.zeros(replicas)
    while pending.size:
        g = np.asarray(gap.sample(rng, (pending.size, k)), dtype=float)
        cum = last[pending, None] + np.cumsum(g, axis=1)
        beyond = cum > t
        hit = beyond.any(axis=1)
        first_idx = np.argmax(beyond, axis=1)
        rows = pending[hit]
        out[rows] = cum[hit, first_idx[hit]] - t
        last[pending[~hit]] = cum[~hit, -1]
        pending = pending[~hit]
    return out
