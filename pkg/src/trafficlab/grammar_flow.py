"""Random-grammar car dynamics on words over {0, 1, 2}.

Symbols: 0 empty cell, 1 fast (active) driver, 2 quiet driver.  A word is
written back to front, ``"s_N ... s_2 s_1"``, so the front car is the last
character and cars move to the right.  The symbol s_k sits at coordinate
r - k + 1.

Substitutions and their intensities (per match):

    rule 1  "10"  -> "01"    lambda0_plus   fast driver moves into a hole
    rule 2  "120" -> "021"   lambda1_plus   fast driver overtakes a quiet one
    rule 3  "22"  -> "202"   lambda2_minus  quiet driver brakes; a cell is
            "21"  -> "201"                  inserted, the rear part shifts back
    rule 4  "200" -> "020"   lambda2_plus   quiet driver accelerates
    drift   r -> r + 1       v              the whole group advances

On a free word the leading (back) zeros are trimmed after every step.  On
a ring the word is periodic and patterns wrap around.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import ParameterError
from .kernels import impl as _k
from .stats import Estimate, batch_means

__all__ = [
    "GrammarSpec",
    "GrammarState",
    "GrammarTrace",
    "Absorbed",
    "RULE_NAMES",
    "enabled_events",
    "step",
    "simulate",
    "relative_velocity_formula",
    "relative_velocity_estimate",
    "tasep_mode_check",
    "bond_current",
    "ring_word",
]

RULE_NAMES = {0: "drift", 1: "10>01", 2: "120>021", 3: "2x>20x", 4: "200>020"}
_G_DONE, _G_ABSORBED, _G_GROW, _G_LOG_FULL, _G_SNAPSHOT = 0, 1, 2, 3, 4


class Absorbed(RuntimeError):
    """No event is enabled: the chain is frozen."""


@dataclass(frozen=True)
class GrammarSpec:
    lambda0_plus: float = 0.0
    lambda1_plus: float = 0.0
    lambda2_plus: float = 0.0
    lambda2_minus: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        for name in ("lambda0_plus", "lambda1_plus", "lambda2_plus", "lambda2_minus", "v"):
            x = getattr(self, name)
            if not (x >= 0) or math.isinf(x):
                raise ParameterError(f"{name} must be finite and nonnegative, got {x!r}")

    @property
    def frozen(self) -> bool:
        return self.rates.max() == 0

    @property
    def rates(self) -> np.ndarray:
        """Kernel order: (v, rule 1, rule 2, rule 3, rule 4)."""
        return np.array([self.v, self.lambda0_plus, self.lambda1_plus, self.lambda2_minus, self.lambda2_plus],
                        dtype=float)

    def rule_rate(self, rule: int) -> float:
        return float(self.rates[rule])


def _encode(word: str) -> np.ndarray:
    try:
        return np.array([int(c) for c in word], dtype=np.int8)
    except ValueError:
        raise ParameterError(f"word must use only the symbols 0, 1, 2: {word!r}") from None


def _decode(buf) -> str:
    return "".join("012"[int(c)] for c in buf)


@dataclass(frozen=True)
class GrammarState:
    """Word (back to front), front coordinate r, time t, and topology."""

    word: str
    r: int = 0
    t: float = 0.0
    ring: bool = False

    def __post_init__(self):
        if not self.word:
            raise ParameterError("word must be nonempty")
        if set(self.word) - set("012"):
            raise ParameterError(f"word must use only the symbols 0, 1, 2: {self.word!r}")
        if not self.ring and self.word[-1] == "0":
            raise ParameterError("the front symbol of a free word cannot be 0")

    @property
    def n_fast(self) -> int:
        return self.word.count("1")

    @property
    def n_quiet(self) -> int:
        return self.word.count("2")

    def coordinates(self) -> np.ndarray:
        """Coordinate of each character of ``word`` (left to right)."""
        n = len(self.word)
        return self.r - n + 1 + np.arange(n)


def _matches(word: str, ring: bool, rule: int) -> list[int]:
    n = len(word)
    out = []
    for j in range(n):
        if not ring and j + (3 if rule in (2, 4) else 2) > n:
            continue
        a = word[j]
        b = word[(j + 1) % n]
        c = word[(j + 2) % n]
        if rule == 1:
            hit = a == "1" and b == "0"
        elif rule == 2:
            hit = a == "1" and b == "2" and c == "0"
        elif rule == 3:
            hit = a == "2" and b in "12"
        else:
            hit = a == "2" and b == "0" and c == "0"
        if hit:
            out.append(j)
    return out


def enabled_events(state: GrammarState, spec: GrammarSpec) -> list[tuple[int, int, float]]:
    """Every (rule, position, intensity); drift is (0, -1, v).

    Positions are 0-based character indices into ``state.word`` of the
    first symbol of the matched pattern.  Matches are listed even when the
    rule's intensity is zero.
    """
    out = [(0, -1, float(spec.v))]
    for rule in (1, 2, 3, 4):
        rate = spec.rule_rate(rule)
        out.extend((rule, j, rate) for j in _matches(state.word, state.ring, rule))
    return out


def _apply(word: str, ring: bool, rule: int, j: int) -> str:
    w = list(word)
    n = len(w)
    if rule == 1:
        w[j], w[(j + 1) % n] = "0", "1"
    elif rule == 2:
        w[j], w[(j + 1) % n], w[(j + 2) % n] = "0", "2", "1"
    elif rule == 3:
        w.insert(j + 1, "0")
    elif rule == 4:
        w[j], w[(j + 1) % n] = "0", "2"
    out = "".join(w)
    if not ring:
        stripped = out.lstrip("0")
        out = stripped if stripped else "0"
    return out


def step(state: GrammarState, spec: GrammarSpec, rng: np.random.Generator):
    """One CTMC transition: returns (new state, (time, rule, position)).

    Consumes two uniforms per transition (waiting time, then event choice)
    in the same way as the compiled simulator.
    """
    events = enabled_events(state, spec)
    counts = [0, 0, 0, 0, 0]
    for rule, _, _ in events[1:]:
        counts[rule] += 1
    rates = spec.rates
    total = rates[0] + sum(rates[r] * counts[r] for r in range(1, 5))
    if total <= 0:
        raise Absorbed("no enabled event")
    t_ev = float(state.t - math.log1p(-rng.random()) / total)
    x = rng.random() * total
    rule, k = 0, 0
    if x >= rates[0]:
        x -= rates[0]
        for rr in range(1, 5):
            w = rates[rr] * counts[rr]
            if w > 0:
                rule = rr
                if x < w:
                    k = min(int(x / rates[rr]), counts[rr] - 1)
                    break
                x -= w
                k = counts[rr] - 1
    if rule == 0:
        new = GrammarState(state.word, state.r + 1, t_ev, state.ring)
        return new, (t_ev, 0, -1)
    j = _matches(state.word, state.ring, rule)[k]
    new = GrammarState(_apply(state.word, state.ring, rule, j), state.r, t_ev, state.ring)
    return new, (t_ev, rule, j)


@dataclass
class GrammarTrace:
    """Event log and snapshots of one trajectory.

    ``positions`` are 0-based character indices (from the back) in the
    word as it was just before the event; -1 for drift.
    """

    times: np.ndarray
    rules: np.ndarray
    positions: np.ndarray
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (word, r)
    final: GrammarState | None = None
    absorbed: bool = False

    def __len__(self):
        return int(self.times.size)

    def rule_counts(self) -> np.ndarray:
        return np.bincount(self.rules, minlength=5)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,rule,position\n")
        for t, r, p in zip(self.times, self.rules, self.positions):
            buf.write(f"{t!r},{RULE_NAMES[int(r)]},{int(p)}\n")
        return buf.getvalue()

    def snapshot_lines(self) -> str:
        return "".join(f"{w}\n" for w, _ in self.snapshots)


def simulate(
    initial: GrammarState,
    spec: GrammarSpec,
    t_max: float,
    rng: np.random.Generator,
    snapshot_times=(),
    max_events: int | None = None,
) -> GrammarTrace:
    """Run the chain from ``initial`` until ``t_max``.

    Snapshots record (word, r) at each requested time.  If the chain
    freezes, the trace ends early with ``absorbed=True`` and the remaining
    snapshots repeat the frozen state.
    """
    if not t_max > 0:
        raise ParameterError("t_max must be positive")
    snaps = sorted(float(s) for s in snapshot_times)
    n0 = len(initial.word)
    buf = np.zeros(max(2 * n0, n0 + 64), dtype=np.int8)
    buf[:n0] = _encode(initial.word)
    st = np.array([n0, initial.r, 0, 0], dtype=np.int64)
    fst = np.array([initial.t, 0.0])
    logcap = 1024
    ev_t = np.zeros(logcap)
    ev_rule = np.zeros(logcap, dtype=np.int8)
    ev_pos = np.zeros(logcap, dtype=np.int64)
    rates = spec.rates
    out_snap_t, out_snap = [], []
    si = 0
    absorbed = False
    limit = math.inf if max_events is None else max_events

    def record(at):
        out_snap_t.append(at)
        out_snap.append((_decode(buf[: st[0]]), int(st[1])))

    while True:
        while si < len(snaps) and snaps[si] < fst[0]:
            record(snaps[si])
            si += 1
        snap_at = snaps[si] if si < len(snaps) and snaps[si] <= t_max else math.inf
        status = _k.grammar_run(rng, buf, st, fst, rates, bool(initial.ring), float(t_max), snap_at, ev_t, ev_rule, ev_pos)
        if status == _G_SNAPSHOT:
            record(snap_at)
            si += 1
        elif status == _G_GROW:
            buf = np.concatenate([buf, np.zeros(buf.size, dtype=np.int8)])
        elif status == _G_LOG_FULL:
            if st[2] >= limit:
                break
            ev_t = np.concatenate([ev_t, np.zeros(ev_t.size)])
            ev_rule = np.concatenate([ev_rule, np.zeros(ev_rule.size, dtype=np.int8)])
            ev_pos = np.concatenate([ev_pos, np.zeros(ev_pos.size, dtype=np.int64)])
            if ev_t.size > limit:
                m = int(limit)
                ev_t, ev_rule, ev_pos = ev_t[:m].copy(), ev_rule[:m].copy(), ev_pos[:m].copy()
        elif status == _G_ABSORBED:
            absorbed = True
            break
        else:
            break
    while si < len(snaps) and snaps[si] <= t_max:
        record(snaps[si])
        si += 1
    m = int(st[2])
    final = GrammarState(_decode(buf[: st[0]]), int(st[1]), float(fst[0]), initial.ring)
    return GrammarTrace(ev_t[:m].copy(), ev_rule[:m].astype(np.int64), ev_pos[:m].copy(),
                        out_snap_t, out_snap, final, absorbed)


def ring_word(n: int, counts: dict, rng: np.random.Generator) -> str:
    """Random arrangement of a ring word with the given symbol counts."""
    k1, k2 = int(counts.get("1", 0)), int(counts.get("2", 0))
    if k1 + k2 > n or min(k1, k2) < 0:
        raise ParameterError("symbol counts exceed ring size")
    cells = np.array([1] * k1 + [2] * k2 + [0] * (n - k1 - k2), dtype=np.int8)
    return _decode(rng.permutation(cells))


def relative_velocity_formula(spec: GrammarSpec, rho0: float, rho2: float) -> float:
    return spec.lambda0_plus * rho0 + 2.0 * spec.lambda1_plus * rho2


def _check_densities(rho0, rho2):
    if not (0 <= rho0 <= 1 and 0 <= rho2 <= 1 and rho0 + rho2 <= 1 + 1e-12):
        raise ParameterError(f"need rho0, rho2 >= 0 with rho0 + rho2 <= 1, got {rho0}, {rho2}")


def relative_velocity_estimate(
    spec: GrammarSpec,
    rho0: float,
    rho2: float,
    t_max: float,
    rng: np.random.Generator,
    environment: str = "annealed",
    n_cells: int = 2000,
    n_batches: int = 20,
) -> Estimate:
    """Speed of one fast car relative to the group frame, with std-error.

    ``environment="annealed"``: the fast car sees a fresh environment at
    every attempt.  Its attempt clock rings at rate lambda0+ + lambda1+;
    a rule-1 attempt finds a hole ahead with probability rho0, a rule-2
    attempt finds a quiet car ahead with probability rho2 and the cell
    behind it free.  Background cars outside the car's neighbourhood are
    treated as resampled between attempts.

    ``environment="frozen"``: a literal ring of ``n_cells`` cells holding
    the fast car, round(rho0 n) holes and round(rho2 n) quiet cars, run
    with lambda2+ = lambda2- = 0.  The background only changes where the
    fast car passes, so the car can be trapped (e.g. behind "22").
    """
    _check_densities(rho0, rho2)
    if not t_max > 0:
        raise ParameterError("t_max must be positive")
    l0, l1 = spec.lambda0_plus, spec.lambda1_plus
    width = t_max / n_batches
    if environment == "annealed":
        total = l0 + l1
        disp = np.zeros(n_batches)
        if total > 0:
            for b in range(n_batches):
                k = int(rng.poisson(total * width))
                u = rng.random((2, k))
                is_r1 = u[0] * total < l0
                gain = np.where(is_r1, (u[1] < rho0) * 1.0, (u[1] < rho2) * 2.0)
                disp[b] = gain.sum()
        est = batch_means(disp / width, n_batches)
        return Estimate(est.value, est.stderr, est.n)
    if environment != "frozen":
        raise ParameterError(f"unknown environment {environment!r}")
    # the background holds only holes and quiet cars, so the densities must fill it
    if abs(rho0 + rho2 - 1.0) > 1e-12:
        raise ParameterError("frozen environment needs rho0 + rho2 = 1 (one fast car)")
    n2 = min(int(round(rho2 * (n_cells - 1))), n_cells - 1)
    word = "1" + ring_word(n_cells - 1, {"2": n2}, rng)
    frozen_spec = GrammarSpec(lambda0_plus=l0, lambda1_plus=l1)
    trace = simulate(GrammarState(word, 0, 0.0, ring=True), frozen_spec, t_max, rng)
    gain = np.where(trace.rules == 1, 1.0, np.where(trace.rules == 2, 2.0, 0.0))
    idx = np.minimum((trace.times / width).astype(np.int64), n_batches - 1)
    disp = np.bincount(idx, weights=gain, minlength=n_batches)
    est = batch_means(disp / width, n_batches)
    return Estimate(est.value, est.stderr, est.n)


def tasep_mode_check(spec: GrammarSpec) -> bool:
    """True when the grammar reduces to TASEP (lambda0+ = lambda1+, lambda2- = 0)."""
    return spec.lambda0_plus == spec.lambda1_plus and spec.lambda2_minus == 0


def bond_current(trace: GrammarTrace, bond: int, t_max: float, n_batches: int = 20) -> Estimate:
    """Rate of rule-1 hops across the bond (bond -> bond+1) on a ring."""
    hits = trace.times[(trace.rules == 1) & (trace.positions == bond)]
    width = t_max / n_batches
    idx = np.minimum((hits / width).astype(np.int64), n_batches - 1)
    counts = np.bincount(idx, minlength=n_batches)
    return batch_means(counts / width, n_batches)
