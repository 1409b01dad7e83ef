"""Experiment configs, seeded replication and result files.

Every experiment is described by a flat schema (key, type, default), a
per-replica function taking the validated parameters and its own
generator, and an optional closed-form reference.  Replica i draws from
``Generator(PCG64(SeedSequence([seed, i])))`` so any replica can be rerun
alone, and aggregation always runs in replica order.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import capacity_jam, critical_load, grammar_flow, linear_road, pointfield, qnet, startup_order
from .distributions import DistributionSpec, ParameterError, distribution_from_dict
from .stats import jackknife_covariance, ks_test, mean_se

__all__ = [
    "ConfigError",
    "GENERATOR",
    "Field",
    "Experiment",
    "ExperimentConfig",
    "RunReport",
    "EXPERIMENTS",
    "list_experiments",
    "parse_config_text",
    "load_config",
    "validate",
    "replica_generator",
    "run",
]

GENERATOR = "PCG64"
CSV_COMMENT = "#"


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------
_NO_DEFAULT = object()


@dataclass(frozen=True)
class Field:
    kind: str  # float, int, str, dist, json
    default: Any = _NO_DEFAULT
    lo: float | None = None  # inclusive bound
    lo_open: bool = False  # strict bound
    choices: tuple = ()
    doc: str = ""

    @property
    def required(self) -> bool:
        return self.default is _NO_DEFAULT


def _coerce(path: str, f: Field, value):
    # optional fields (default None) accept an explicit null
    if value is None and f.default is None:
        return None
    if f.kind in ("float", "int"):
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        try:
            x = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
        if math.isnan(x):
            raise ConfigError(f"{path}: NaN is not allowed")
        if f.kind == "int":
            if not math.isfinite(x) or x != int(x):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            x = int(x)
        if f.lo is not None:
            if f.lo_open and not x > f.lo:
                raise ConfigError(f"{path}: must be > {f.lo}, got {value!r}")
            if not f.lo_open and not x >= f.lo:
                raise ConfigError(f"{path}: must be >= {f.lo}, got {value!r}")
        return x
    if f.kind == "str":
        if not isinstance(value, str) or (f.choices and value not in f.choices):
            raise ConfigError(f"{path}: expected one of {list(f.choices)}, got {value!r}")
        return value
    if f.kind == "dist":
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                raise ConfigError(f"{path}: expected a distribution object") from None
        try:
            return distribution_from_dict(value)
        except ParameterError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if f.kind == "json":
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                raise ConfigError(f"{path}: expected a JSON value") from None
        return value
    raise AssertionError(f.kind)


def _plain(value):
    """Config value in canonical JSON-friendly form (for hashing and echo)."""
    if isinstance(value, DistributionSpec):
        return _plain(value.to_dict())
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(value, np.integer):
        return int(value)
    return value


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Experiment:
    id: str
    topic: str
    fields: dict
    replica: Callable  # (params, rng) -> dict of per-replica values
    summarize: Callable  # (params, rows) -> summary dict
    build: Callable | None = None  # (params) -> raises ParameterError on cross-field problems
    example: dict = field(default_factory=dict)


def _rel_check(metric: str, empirical: float, stderr: float, analytic: float, tol: float, **extra) -> dict:
    err = abs(empirical - analytic) / abs(analytic) if analytic != 0 else abs(empirical)
    return {
        "metric": metric,
        "analytic": analytic,
        "empirical": empirical,
        "stderr": stderr,
        "rel_error": err,
        "tolerance": tol,
        "passed": bool(err <= tol),
        **extra,
    }


def _est(rows, key):
    e = mean_se([r[key] for r in rows])
    return e.value, (e.stderr if len(rows) > 1 else math.nan)


_TOL = lambda d: Field("float", d, lo=0.0, lo_open=True, doc="relative tolerance")


# -- pointfield --------------------------------------------------------------
def _pf_gap(p):
    if p["process"] == "poisson":
        from .distributions import Exponential

        return Exponential(p["rho"])
    return p["gap"]


def _pf_replica(p, rng):
    a, b = 0.0, p["length"]
    if p["process"] == "poisson":
        cfg = pointfield.sample_poisson(p["rho"], (a, b), rng)
    else:
        cfg = pointfield.sample_stationary_renewal(p["gap"], (a, b), rng)
    n = len(cfg)
    return {"n_points": n, "density": n / (b - a), "first_delay": float(cfg.positions[0] - a) if n else math.nan}


def _pf_summary(p, rows):
    gap = _pf_gap(p)
    emp, se = _est(rows, "density")
    delays = [r["first_delay"] for r in rows if math.isfinite(r["first_delay"])]
    ks_p = ks_test(delays, gap.equilibrium_cdf)[1] if len(delays) >= 2 else math.nan
    return _rel_check("density", emp, se, 1.0 / gap.mean, p["tolerance"],
                      mean_first_delay=float(np.mean(delays)) if delays else math.nan,
                      analytic_first_delay=gap.equilibrium_mean(), first_delay_ks_p=ks_p)


def _pf_build(p):
    if p["process"] == "poisson" and not p["rho"] > 0:
        raise ParameterError("rho must be positive for a Poisson field")
    _pf_gap(p)


# -- grammar -----------------------------------------------------------------
def _gr_spec(p):
    return grammar_flow.GrammarSpec(p["lambda0_plus"], p["lambda1_plus"], p["lambda2_plus"], p["lambda2_minus"], p["v"])


def _gr_replica(p, rng):
    est = grammar_flow.relative_velocity_estimate(_gr_spec(p), p["rho0"], p["rho2"], p["t_max"], rng,
                                                  environment=p["environment"])
    return {"v_rel": est.value, "stderr": est.stderr}


def _gr_summary(p, rows):
    emp, se = _est(rows, "v_rel")
    ana = grammar_flow.relative_velocity_formula(_gr_spec(p), p["rho0"], p["rho2"])
    return _rel_check("v_rel", emp, se, ana, p["tolerance"])


def _gr_build(p):
    _gr_spec(p)
    if p["rho0"] + p["rho2"] > 1:
        raise ParameterError("rho0 + rho2 must not exceed 1")


# -- jam ---------------------------------------------------------------------
def _jam_geom(p):
    return capacity_jam.CarGeometry(p["d"], p["d0_plus"], capacity_jam.linear_headway(p["c"], p["c0"]))


def _jam_dplus(p):
    h = p["headway"]
    return h.mean if isinstance(h, DistributionSpec) else _jam_geom(p).D(p["v"])


def _jam_replica(p, rng):
    h = p["headway"] if isinstance(p["headway"], DistributionSpec) else None
    tr = capacity_jam.simulate_jam(_jam_geom(p), p["v"], p["t_max"], rng, headway_dist=h)
    return {"L_over_t": float(tr.L(p["t_max"])) / p["t_max"], "stopped": int(np.sum(tr.stop_times <= p["t_max"]))}


def _jam_summary(p, rows):
    emp, se = _est(rows, "L_over_t")
    ana = capacity_jam.jam_growth_rate(p["d"], p["d0_plus"], _jam_dplus(p), p["v"])
    return _rel_check("L_over_t", emp, se, ana, p["tolerance"])


def _jam_build(p):
    _jam_geom(p)
    capacity_jam.jam_growth_rate(p["d"], p["d0_plus"], _jam_dplus(p), p["v"])


# -- startup -----------------------------------------------------------------
def _su_replica(p, rng):
    if p["model"] == "A":
        res = startup_order.simulate_startup_A(p["rho"], (0.0, p["length"]), rng)
        g = res.final_gaps
        rho = p["rho"]
        stat, pv = ks_test(g, lambda x: 1.0 - np.exp(-rho * np.asarray(x))) if g.size >= 2 else (math.nan, math.nan)
        return {"n_cars": int(res.initial.size), "mean_gap": float(g.mean()) if g.size else math.nan,
                "ks_stat": stat, "ks_p": pv}
    res = startup_order.simulate_startup_B(p["rho"], p["v"], p["d_eff"], p["n_cars"], rng)
    return {"n_cars": p["n_cars"], "tau1_last": float(res.tau1[-1]), "tau1_mean": float(np.mean(res.tau1))}


def _su_summary(p, rows):
    if p["model"] == "A":
        emp, se = _est(rows, "mean_gap")
        return _rel_check("mean_gap", emp, se, 1.0 / p["rho"], p["tolerance"],
                          min_ks_p=float(np.nanmin([r["ks_p"] for r in rows])))
    emp, se = _est(rows, "tau1_last")
    return {"metric": "tau1_last", "analytic": None, "empirical": emp, "stderr": se, "passed": None}


def _su_build(p):
    if p["model"] == "B" and not (p["v"] > 0 and p["d_eff"] >= 0 and p["n_cars"] >= 1):
        raise ParameterError("model B needs v > 0, d_eff >= 0, n_cars >= 1")


# -- velocity-order ----------------------------------------------------------
def _vo_spec(p):
    return startup_order.VelocityFlowSpec(p["n_cars"], p["v_a"], p["v_b"], p["q_ab"], p["q_ba"], p["C1"], p["C2"],
                                          p["lambda_overtake"], p["rho0"])


def _vo_replica(p, rng):
    spec = _vo_spec(p)
    snaps = np.linspace(0.0, p["t_max"], p["snapshots"] + 1)[1:]
    tr = startup_order.simulate_velocity_flow(spec, p["t_max"], snaps, rng)
    bad = 0
    for s in range(snaps.size):
        order = tr.rank[s]
        v = tr.vel[s, order]
        c = tr.contact[s, order].astype(bool)
        c[0] = False
        bad += int(np.sum(c[1:] & (v[1:] != v[:-1])))
    row = {f"v{i}": float(tr.vel[-1, i]) for i in range(spec.n_cars)}
    row.update(contacts=tr.contacts, overtakes=tr.overtakes, contact_mismatches=bad)
    return row


def _vo_summary(p, rows):
    n = p["n_cars"]
    z = []
    if len(rows) >= 3:
        for i in range(n):
            for j in range(i + 1, n):
                e = jackknife_covariance([r[f"v{i}"] for r in rows], [r[f"v{j}"] for r in rows])
                z.append(e.value / e.stderr if e.stderr > 0 else 0.0)
    max_z = float(np.max(np.abs(z))) if z else math.nan
    mism = int(sum(r["contact_mismatches"] for r in rows))
    lam = p["lambda_overtake"]
    out = {"metric": "max_abs_cov_z", "analytic": 0.0 if math.isinf(lam) else None, "empirical": max_z,
           "contact_mismatches": mism}
    if math.isinf(lam):
        out.update(tolerance=3.0, passed=bool(z) and max_z <= 3.0)
    elif lam == 0:
        out.update(metric="contact_mismatches", analytic=0, empirical=mism, passed=mism == 0)
    else:
        out["passed"] = None
    return out


# -- linear road -------------------------------------------------------------
def _tandem_spec(p):
    return linear_road.TandemSpec(p["lambda1"], p["lambda2"], p["mu"], p["v1"], p["v2"])


def _tandem_replica(p, rng):
    spec = _tandem_spec(p)
    run_ = linear_road.simulate_tandem(spec, p["length"], p["n_cars"], rng)
    return {"mean_speed": run_.mean_speed + spec.v2, "servers": run_.servers}


def _tandem_summary(p, rows):
    emp, se = _est(rows, "mean_speed")
    return _rel_check("mean_speed", emp, se, linear_road.tandem_mean_speed(_tandem_spec(p)), p["tolerance"])


def _tandem_build(p):
    linear_road.tandem_mean_speed(_tandem_spec(p))


def _obs_spec(p):
    return linear_road.ObstacleRoadSpec(p["lam"], p["Q"], p["F"], p["v"])


def _obs_replica(p, rng):
    r = linear_road.simulate_obstacle_road(_obs_spec(p), p["x_max"], rng)
    return {"mean_speed": r.mean_speed, "T": r.T, "encounters": int(r.delays.size),
            "idle_minus_delays": r.idle_time - math.fsum(r.delays.tolist())}


def _obs_summary(p, rows):
    emp, se = _est(rows, "mean_speed")
    return _rel_check("mean_speed", emp, se, linear_road.mean_speed_obstacles(_obs_spec(p)), p["tolerance"])


def _slow_spec(p):
    return linear_road.SlowCarRoadSpec(p["lam"], p["G"], p["F"], p["v1"], p["v2"])


def _slow_replica(p, rng):
    r = linear_road.simulate_slow_car_road(_slow_spec(p), p["x_max"], rng)
    return {"mean_speed": r.mean_speed, "T": r.T, "encounters": int(r.delays.size)}


def _slow_summary(p, rows):
    spec = _slow_spec(p)
    emp, se = _est(rows, "mean_speed")
    moving = spec.v2 + linear_road.mean_speed_obstacles(linear_road.moving_frame_obstacle_spec(spec))
    return _rel_check("mean_speed", emp, se, linear_road.mean_speed_slow_cars(spec), p["tolerance"],
                      moving_frame_value=moving)


# -- qnet --------------------------------------------------------------------
def _net(p):
    try:
        return qnet.NetworkSpec.from_dict(p["network"])
    except (ParameterError, qnet.StructuralError, TypeError, KeyError) as exc:
        raise ConfigError(f"network: {exc}") from None


def _vector_check(metric, emp, se, ana, tol, **extra):
    emp, ana = np.asarray(emp, float), np.asarray(ana, float)
    err = float(np.max(np.abs(emp - ana) / np.maximum(np.abs(ana), 1.0)))
    return {"metric": metric, "analytic": ana.tolist(), "empirical": emp.tolist(), "stderr": list(se),
            "max_rel_error": err, "tolerance": tol, "passed": bool(err <= tol), **extra}


def _qnet_replica(p, rng):
    spec = _net(p)
    run_ = qnet.simulate_ctmc(spec, p["t_max"], rng, M=p.get("M"))
    return {f"mean{i + 1}": float(m) for i, m in enumerate(run_.time_weighted_mean())}


def _qnet_means(rows, n):
    est = [mean_se([r[f"mean{i + 1}"] for r in rows]) for i in range(n)]
    return [e.value for e in est], [e.stderr if len(rows) > 1 else math.nan for e in est]


def _qc_summary(p, rows):
    spec = _net(p)
    emp, se = _qnet_means(rows, spec.N)
    st = qnet.stationary_closed(spec, p["M"], enumerate_limit=0)
    return _vector_check("node_means", emp, se, st.means, p["tolerance"], log_Z=st.log_Z)


def _qc_build(p):
    spec = _net(p)
    if not spec.is_closed:
        raise ParameterError("qnet-closed needs a network without external arrivals")


def _qo_summary(p, rows):
    spec = _net(p)
    emp, se = _qnet_means(rows, spec.N)
    st = qnet.stationary_open(spec)
    if not st.ergodic:
        return {"metric": "node_means", "analytic": None, "empirical": emp, "stderr": se, "passed": None,
                "ergodic": False, "unstable_nodes": [int(i) + 1 for i in st.unstable_nodes]}
    return _vector_check("node_means", emp, se, st.means, p["tolerance"], ergodic=True)


def _qo_build(p):
    spec = _net(p)
    if spec.is_closed:
        raise ParameterError("qnet-open needs external arrivals")


# -- critical load -----------------------------------------------------------
def _cl_measure(p):
    atoms = p["atoms"]
    if not isinstance(atoms, list) or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
        raise ParameterError("atoms must be a list of [load, mass] pairs")
    return critical_load.LimitMeasure(tuple(tuple(a) for a in atoms))


def _cl_replica(p, rng):
    I = _cl_measure(p)
    vals = np.array([r for r, _ in I.atoms])
    w = np.array([m for _, m in I.atoms])
    loads = np.concatenate([[1.0], rng.choice(vals, size=p["N"] - 1, p=w / w.sum())])
    M = int(math.floor(p["lam"] * p["N"]))
    prof = critical_load.LoadProfile(loads, M, p["lam"])
    rep = critical_load.partition_asymptotics(prof)
    exact = float(qnet.log_partition_table(loads, M)[M])
    return {"M": M, "z0_N": rep.z0, "log_Z_saddle": rep.log_Z, "log_Z_exact": exact,
            "rel_error": abs(rep.log_Z - exact) / abs(exact)}


def _cl_summary(p, rows):
    I = _cl_measure(p)
    emp, se = _est(rows, "rel_error")
    z0_emp, _ = _est(rows, "z0_N")
    return {"metric": "rel_error_log_Z", "analytic": 0.0, "empirical": emp, "stderr": se, "tolerance": p["tolerance"],
            "passed": bool(emp <= p["tolerance"]), "lambda_cr": critical_load.lambda_critical(I),
            "z0_limit": critical_load.z0_limit(I, p["lam"]), "mean_z0_N": z0_emp}


def _cl_build(p):
    I = _cl_measure(p)
    if any(r >= 1.0 for r, _ in I.atoms):
        raise ParameterError("atoms describe the non-maximal loads and must be < 1")
    if not p["lam"] < critical_load.lambda_critical(I):
        raise ParameterError("the saddle comparison needs lam below the critical density")
    if math.floor(p["lam"] * p["N"]) < 1:
        raise ParameterError("lam * N must be at least 1")


_EXP1 = {"kind": "exponential", "rate": 1.0}
_NO_BYPASS = {"kind": "deterministic", "value": "inf"}
_F = lambda **kw: Field("float", **kw)
_POS = lambda d=_NO_DEFAULT: Field("float", d, lo=0.0, lo_open=True)
_NONNEG = lambda d=_NO_DEFAULT: Field("float", d, lo=0.0)

EXPERIMENTS: dict[str, Experiment] = {}


def _register(e: Experiment):
    EXPERIMENTS[e.id] = e


_register(Experiment(
    "pointfield", "point fields: Poisson and stationary renewal configurations",
    {"process": Field("str", "renewal", choices=("poisson", "renewal")), "rho": _NONNEG(0.0),
     "gap": Field("dist", _EXP1), "length": _POS(1000.0), "tolerance": _TOL(0.05)},
    _pf_replica, _pf_summary, _pf_build, {"process": "renewal", "gap": {"kind": "uniform", "lo": 0, "hi": 2}}))
_register(Experiment(
    "grammar", "random-grammar fast car: relative velocity",
    {"lambda0_plus": _NONNEG(1.0), "lambda1_plus": _NONNEG(1.0), "lambda2_plus": _NONNEG(0.0),
     "lambda2_minus": _NONNEG(0.0), "v": _NONNEG(1.0), "rho0": _NONNEG(0.3), "rho2": _NONNEG(0.2),
     "t_max": _POS(2000.0), "environment": Field("str", "annealed", choices=("annealed", "frozen")),
     "tolerance": _TOL(0.05)},
    _gr_replica, _gr_summary, _gr_build, {"t_max": 200.0}))
_register(Experiment(
    "jam", "jam growth behind a stopped front",
    {"d": _POS(4.0), "d0_plus": _NONNEG(1.0), "c": _NONNEG(1.0), "c0": _NONNEG(2.0), "v": _POS(1.0),
     "t_max": _POS(1e4), "headway": Field("dist", None), "tolerance": _TOL(0.02)},
    _jam_replica, _jam_summary, _jam_build, {"t_max": 100.0}))
_register(Experiment(
    "startup", "start-up of a jam: final spacing (model A) or restart delays (model B)",
    {"model": Field("str", "A", choices=("A", "B")), "rho": _POS(0.5), "length": _POS(2000.0),
     "v": _POS(1.0), "d_eff": _NONNEG(1.0), "n_cars": Field("int", 50, lo=1), "tolerance": _TOL(0.05)},
    _su_replica, _su_summary, _su_build, {"length": 200.0}))
_register(Experiment(
    "velocity-order", "two-speed drivers: velocity correlations and order phases",
    {"n_cars": Field("int", 5, lo=2), "v_a": _POS(1.0), "v_b": _POS(2.0), "q_ab": _POS(1.0), "q_ba": _POS(1.0),
     "C1": _NONNEG(0.5), "C2": _POS(3.0), "lambda_overtake": _NONNEG(math.inf), "rho0": _POS(1.0),
     "t_max": _POS(20.0), "snapshots": Field("int", 10, lo=1)},
    _vo_replica, _vo_summary, None, {"t_max": 5.0}))
_register(Experiment(
    "road-tandem", "fast cars queueing behind slow cars (tandem M/M/1)",
    {"lambda1": _NONNEG(0.1), "lambda2": _POS(0.2), "mu": _POS(1.0), "v1": _POS(1.0), "v2": _NONNEG(0.0),
     "length": _POS(1e5), "n_cars": Field("int", 300, lo=10), "tolerance": _TOL(0.02)},
    _tandem_replica, _tandem_summary, _tandem_build, {"length": 1e3, "n_cars": 50}))
_register(Experiment(
    "road-obstacles", "temporary obstacles with random lifetimes",
    {"lam": _NONNEG(0.5), "Q": Field("dist", _EXP1), "F": Field("dist", _NO_BYPASS), "v": _POS(1.0),
     "x_max": _POS(1e5), "tolerance": _TOL(0.01)},
    _obs_replica, _obs_summary, _obs_spec, {"x_max": 1e3}))
_register(Experiment(
    "road-slowcars", "slow cars with finite routes",
    {"lam": _NONNEG(0.2), "G": Field("dist", _EXP1), "F": Field("dist", _EXP1), "v1": _POS(2.0), "v2": _POS(1.0),
     "x_max": _POS(1e5), "tolerance": _TOL(0.02)},
    _slow_replica, _slow_summary, _slow_spec, {"x_max": 1e3}))
_register(Experiment(
    "qnet-closed", "closed Jackson network: product-form means",
    {"network": Field("json", {"N": 2, "edges": [[1, 2, 1.0], [2, 1, 1.0]], "mu": [1.0, 2.0]}), "M": Field("int", 3, lo=0),
     "t_max": _POS(1e4), "tolerance": _TOL(0.05)},
    _qnet_replica, _qc_summary, _qc_build, {"t_max": 1e4}))
_register(Experiment(
    "qnet-open", "open Jackson network: ergodicity and product-form means",
    {"network": Field("json", {"N": 2, "edges": [[1, 2, 1.0]], "mu": [1.0, 0.5], "lambda": {"1": 0.3}}),
     "t_max": _POS(1e5), "tolerance": _TOL(0.05)},
    _qnet_replica, _qo_summary, _qo_build, {"t_max": 1e4}))
_register(Experiment(
    "critical-load", "critical density of large closed networks: saddle-point partition function",
    {"atoms": Field("json", [[0.3, 0.5], [0.6, 0.5]]), "N": Field("int", 200, lo=2), "lam": _POS(0.3),
     "tolerance": _TOL(0.01)},
    _cl_replica, _cl_summary, _cl_build, {"N": 50}))


def list_experiments() -> list[dict]:
    """Catalog: id, topic and the schema with defaults."""
    out = []
    for e in EXPERIMENTS.values():
        schema = {k: {"type": f.kind, "default": None if f.required else _plain(f.default), **(
            {"choices": list(f.choices)} if f.choices else {})} for k, f in e.fields.items()}
        out.append({"id": e.id, "topic": e.topic, "schema": schema, "example": e.example})
    return out


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    replicas: int = 1
    generator: str = GENERATOR

    def canonical(self) -> dict:
        return {"experiment": self.experiment, "params": _plain(self.params), "seed": self.seed,
                "replicas": self.replicas, "generator": self.generator}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines (values JSON when they parse, else strings) or a JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        return raw
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}".splitlines()[0]) from None
    out = {}
    for k, v in cp.items("config"):
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path!r} ({exc.strerror})") from None


def validate(experiment: str, raw: dict, seed: int | None = None, replicas: int | None = None) -> ExperimentConfig:
    """Check keys and values against the schema; CLI seed/replicas override the file."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown id {experiment!r}; choose from {sorted(EXPERIMENTS)}")
    e = EXPERIMENTS[experiment]
    raw = dict(raw)
    if "experiment" in raw and raw.pop("experiment") != experiment:
        raise ConfigError("experiment: config file names a different experiment")
    gen = raw.pop("generator", GENERATOR)
    if gen != GENERATOR:
        raise ConfigError(f"generator: only {GENERATOR!r} is supported, got {gen!r}")
    meta = {"seed": Field("int", 0, lo=0), "replicas": Field("int", 1, lo=1)}
    file_seed = _coerce("seed", meta["seed"], raw.pop("seed")) if "seed" in raw else 0
    file_reps = _coerce("replicas", meta["replicas"], raw.pop("replicas")) if "replicas" in raw else 1
    seed = file_seed if seed is None else _coerce("seed", meta["seed"], seed)
    replicas = file_reps if replicas is None else _coerce("replicas", meta["replicas"], replicas)
    if seed >= 2**64:
        raise ConfigError("seed: must fit in 64 bits")
    unknown = sorted(set(raw) - set(e.fields))
    if unknown:
        raise ConfigError(f"{experiment}.{unknown[0]}: unknown key (allowed: {sorted(e.fields)})")
    params = {}
    for k, f in e.fields.items():
        path = f"{experiment}.{k}"
        if k in raw:
            params[k] = _coerce(path, f, raw[k])
        elif f.required:
            raise ConfigError(f"{path}: required")
        else:
            params[k] = _coerce(path, f, f.default) if f.default is not None else None
    if e.build is not None:
        try:
            e.build(params)
        except (ParameterError, qnet.StructuralError, linear_road.InstabilityError,
                capacity_jam.SingularityError) as exc:
            raise ConfigError(f"{experiment}: {exc}") from None
    return ExperimentConfig(experiment, params, int(seed), int(replicas))


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------
def replica_generator(seed: int, i: int) -> np.random.Generator:
    """Generator(PCG64(SeedSequence([seed, i])))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(i)])))


def _run_one(args):
    experiment, params, seed, i = args
    row = EXPERIMENTS[experiment].replica(params, replica_generator(seed, i))
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in row.items()}


@dataclass
class RunReport:
    config: ExperimentConfig
    rows: list
    summary: dict

    @property
    def passed(self) -> bool | None:
        return self.summary.get("passed")

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(self.rows[0]) if self.rows else []
        buf.write(",".join(["replica", *cols]) + "\n")
        for i, r in enumerate(self.rows):
            buf.write(",".join([str(i), *(_fmt(r[c]) for c in cols)]) + "\n")
        summ = json.dumps(_jsonable(self.summary), sort_keys=True, separators=(",", ":"))
        buf.write(f"{CSV_COMMENT} experiment={self.config.experiment} seed={self.config.seed} "
                  f"replicas={self.config.replicas} generator={self.config.generator}\n")
        buf.write(f"{CSV_COMMENT} summary={summ}\n")
        buf.write(f"{CSV_COMMENT} config_sha256={self.config.hash}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"config": self.config.canonical(), "config_sha256": self.config.hash,
               "summary": _jsonable(self.summary), "replicas": _jsonable(self.rows)}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(config: ExperimentConfig, jobs: int = 1) -> RunReport:
    """Run all replicas (optionally in worker processes) and summarize in replica order."""
    e = EXPERIMENTS[config.experiment]
    tasks = [(config.experiment, config.params, config.seed, i) for i in range(config.replicas)]
    if jobs > 1 and config.replicas > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as ex:
            rows = list(ex.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]
    return RunReport(config, rows, e.summarize(config.params, rows))
