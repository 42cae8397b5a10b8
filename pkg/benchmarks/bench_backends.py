"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

The backend is chosen at import time from ``EQUINAV_NUMBA``, so each backend
is measured in its own subprocess and the parent prints a comparison table::

    python benchmarks/bench_backends.py [--duration 60] [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys
from time import perf_counter


def _best_of(f, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = perf_counter()
        f()
        best = min(best, perf_counter() - t0)
    return best


def worker(duration, repeats):
    import numpy as np

    from equinav._accel import NUMBA_ENABLED
    from equinav.config import InitConfig, RunConfig
    from equinav.eqf import EquivariantFilter
    from equinav.mekf import MultiplicativeEkf
    from equinav.runner import run_filter
    from equinav.sim import SimScenario, simulate_dataset

    scenario = SimScenario(profile="figure8", duration=duration, seed=0)
    dataset = simulate_dataset(scenario)
    config = RunConfig(init=InitConfig(from_truth=True), t0=duration / 2)

    results = {"numba": NUMBA_ENABLED, "timings": {}}

    rng = np.random.default_rng(0)
    w = rng.normal(0.0, 0.2, (2000, 3))
    a = rng.normal(0.0, 1.0, (2000, 3)) + np.array([0.0, 0.0, 9.81])

    def propagate_loop(make):
        flt = make()
        flt.propagate(w[0], a[0], 5e-3)  # compile before timing

        def body():
            for k in range(w.shape[0]):
                flt.propagate(w[k], a[k], 5e-3)

        return body

    benches = {
        "eqf propagate x2000": propagate_loop(lambda: EquivariantFilter(2)),
        "mekf propagate x2000": propagate_loop(lambda: MultiplicativeEkf(2)),
        f"eqf full run ({duration:.0f}s)":
            lambda: run_filter(dataset, "eqf", config),
        f"mekf full run ({duration:.0f}s)":
            lambda: run_filter(dataset, "mekf", config),
    }
    for name, f in benches.items():
        f()  # warm-up
        results["timings"][name] = _best_of(f, repeats)
    print(json.dumps(results))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--duration", type=float, default=60.0)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.worker:
        return worker(args.duration, args.repeats)

    rows = {}
    for mode in ("off", "on"):
        env = dict(os.environ, EQUINAV_NUMBA=mode)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--duration", str(args.duration), "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True, check=True)
        payload = json.loads(proc.stdout.splitlines()[-1])
        expect = mode == "on"
        if payload["numba"] is not expect:
            raise RuntimeError(f"backend flag ignored: EQUINAV_NUMBA={mode} "
                               f"-> numba={payload['numba']}")
        rows[mode] = payload["timings"]

    width = max(len(k) for k in rows["off"])
    print(f"{'benchmark':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    print("-" * (width + 34))
    for name in rows["off"]:
        off, on = rows["off"][name], rows["on"][name]
        print(f"{name:<{width}}  {off * 1e3:>8.1f}ms  {on * 1e3:>8.1f}ms  "
              f"{off / on:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
