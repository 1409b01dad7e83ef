"""Time the compiled kernels against the pure-Python twins.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each case runs the public simulator with the module-level kernel handle
swapped, checks that both backends return identical results, and prints
the compiled best-of-N wall time, one python pass and the speedup.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from trafficlab import grammar_flow as gf
from trafficlab import kernels
from trafficlab import linear_road as lr
from trafficlab import qnet
from trafficlab import startup_order as so
from trafficlab.distributions import NO_BYPASS, Exponential

MODULES = (gf, lr, qnet, so)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def case_ctmc():
    spec = qnet.NetworkSpec([[0, 0.6, 0.4], [0.3, 0, 0.7], [0.5, 0.5, 0]], (1.0, 0.8, 1.2))
    run = qnet.simulate_ctmc(spec, np.inf, _rng(1), M=6, max_events=200_000)
    return run.occupation.tobytes()


def case_grammar():
    word = "".join(_rng(2).choice(list("0012"), 200))
    word = word.rstrip("0") + "1"
    tr = gf.simulate(gf.GrammarState(word), gf.GrammarSpec(1.0, 0.7, 0.4, 0.3, 0.5), 50.0, _rng(3))
    return tr.times.tobytes()


def case_velocity():
    spec = so.VelocityFlowSpec(40, 1.0, 2.0, 1.0, 1.0, 0.5, 3.0, 0.7, 1.0)
    tr = so.simulate_velocity_flow(spec, 40.0, [40.0], _rng(4))
    return tr.pos.tobytes()


def case_obstacles():
    run = lr.simulate_obstacle_road(lr.ObstacleRoadSpec(0.5, Exponential(1.0), NO_BYPASS), 2e4, _rng(5))
    return np.float64(run.T).tobytes()


def case_slowcars():
    spec = lr.SlowCarRoadSpec(0.2, Exponential(1.0), Exponential(1.0), 2.0, 1.0)
    run = lr.simulate_slow_car_road(spec, 2e4, _rng(6))
    return np.float64(run.T).tobytes()


def case_partition():
    r = np.linspace(0.01, 1.0, 400)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
    return np.asarray(qnet._k.log_partition(log_r, 3000)).tobytes()


CASES = {
    "ctmc 2e5 events": case_ctmc,
    "grammar word of 200": case_grammar,
    "velocity flow 40 cars": case_velocity,
    "obstacle road x=2e4": case_obstacles,
    "slow-car road x=2e4": case_slowcars,
    "log partition N=400 M=3000": case_partition,
}


def _timed(fn, name, repeat):
    for mod in MODULES:
        mod._k = kernels.backend(name)
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    active = kernels.backend()
    print(f"{'case':30s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s}  same")
    try:
        for label, fn in CASES.items():
            tc, oc = _timed(fn, "compiled", args.repeat)
            tp, op = _timed(fn, "python", 1)  # slow enough that one pass is stable
            print(f"{label:30s} {tc:13.4f} {tp:11.4f} {tp / tc:8.1f}  {oc == op}")
    finally:
        for mod in MODULES:
            mod._k = active


if __name__ == "__main__":
    main()
