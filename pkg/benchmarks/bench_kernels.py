#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--steps 2000] [--peds 10]
"""

import argparse
import time

import numpy as np

from srfmbench import kernels
from srfmbench.forces import PsiSwitches, SrfmParams


def bench_step(mod, n_peds, steps):
    rng = np.random.default_rng(0)
    pos = rng.uniform(-6, 6, (n_peds, 2))
    vel = rng.uniform(-1, 1, (n_peds, 2))
    goal = rng.uniform(-6, 6, (n_peds, 2))
    v0 = np.full(n_peds, 1.0)
    radius = np.full(n_peds, 0.3)
    ids = np.arange(n_peds, dtype=np.longlong)
    obstacles = np.zeros((0, 3))
    params = SrfmParams()
    psi = PsiSwitches()
    out_pos = np.empty_like(pos)
    out_vel = np.empty_like(vel)
    t0 = time.perf_counter()
    for _ in range(steps):
        mod.step_pedestrians_arrays(
            pos, vel, goal, v0, radius, ids, True, 0.0, 0.0, 0.3, -1,
            obstacles, params, psi, 0.1, 1.3, 0.5, 10.0, out_pos, out_vel)
        pos, out_pos = out_pos, pos
        vel, out_vel = out_vel, vel
    return time.perf_counter() - t0


def bench_frechet(mod, n_points, repeats):
    rng = np.random.default_rng(1)
    a = rng.uniform(-5, 5, (n_points, 2))
    b = rng.uniform(-5, 5, (n_points, 2))
    t0 = time.perf_counter()
    for _ in range(repeats):
        mod.frechet_arrays(a, b)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--peds", type=int, default=10)
    parser.add_argument("--frechet-points", type=int, default=400)
    parser.add_argument("--frechet-repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"active backend: {kernels.BACKEND}")
    results = {}
    for name, mod in backends.items():
        t_step = bench_step(mod, args.peds, args.steps)
        t_fre = bench_frechet(mod, args.frechet_points, args.frechet_repeats)
        results[name] = (t_step, t_fre)
        print(f"{name:9s} step x{args.steps} ({args.peds} peds): {t_step:8.3f}s"
              f"   frechet {args.frechet_points}^2 x{args.frechet_repeats}:"
              f" {t_fre:8.3f}s")
    if len(results) == 2:
        py = results["python"]
        cy = results["compiled"]
        print(f"speedup   step: {py[0] / cy[0]:6.1f}x   "
              f"frechet: {py[1] / cy[1]:6.1f}x")


if __name__ == "__main__":
    main()
