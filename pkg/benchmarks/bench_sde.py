"""Compare the compiled and pure-Python SDE stepping loops.

Runs the same seeded integration with both backends, checks that the recorded
trajectories agree, and reports wall time and steps per second.

    python benchmarks/bench_sde.py --t-sim 2000 --trajectories 8
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from modspec.kernels import compiled_propagate, get_propagate
from modspec.presets import fig2a
from modspec.stochastic import SdeConfig, build_propagators, integrate


def run(backend, series, noise, sde):
    t0 = time.perf_counter()
    traj = integrate(series, noise, replace(sde, backend=backend), check=False)
    return time.perf_counter() - t0, traj


def kernel_only(backend, series, noise, sde, n_steps):
    """Time the stepping loop alone on pre-drawn noise."""
    props = build_propagators(series, noise, sde.dt)
    xi = np.random.default_rng(0).standard_normal((n_steps, sde.n_trajectories, series.dim))
    state = np.zeros((sde.n_trajectories, series.dim), dtype=complex)
    obs = np.ones((1, series.dim), dtype=complex)
    out = np.zeros((n_steps // sde.record_every + 1, sde.n_trajectories, 1), dtype=complex)
    t0 = time.perf_counter()
    get_propagate(backend)(props.P, props.L, xi, state, 0, obs, sde.record_every, sde.record_every, out, 0)
    return time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--t-sim", type=float, default=2000.0)
    p.add_argument("--trajectories", type=int, default=8)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    series, noise = fig2a(args.ratio).build()
    sde = SdeConfig(t_sim=args.t_sim, burn_in=0.0, n_trajectories=args.trajectories,
                    segment_time=args.t_sim, seed=1)
    n_steps = int(round(sde.t_sim / sde.dt))
    backends = ["python"] + (["compiled"] if compiled_propagate is not None else [])
    times, trajs = {}, {}
    for b in backends:
        best = float("inf")
        for _ in range(args.repeat):
            dt, trajs[b] = run(b, series, noise, sde)
            best = min(best, dt)
        times[b] = best
        rate = n_steps * sde.n_trajectories / best
        print(f"{b:>9}: {best:8.3f} s  ({rate:.3e} trajectory-steps/s)")
    for b in backends:
        print(f"{b:>9} kernel only: {kernel_only(b, series, noise, sde, n_steps):8.3f} s")
    if "compiled" in times:
        diff = np.max(np.abs(trajs["compiled"].data - trajs["python"].data))
        scale = np.max(np.abs(trajs["python"].data))
        print(f"speed-up: {times['python'] / times['compiled']:.1f}x; max relative difference {diff / scale:.2e}")
    else:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
