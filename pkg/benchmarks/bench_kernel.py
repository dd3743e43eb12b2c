"""Compare the compiled and pure-Python tree-PS kernels on the default GridWorld.

    python3 benchmarks/bench_kernel.py --agents 20 --trials 100
"""
import argparse
import time

import numpy as np

from photon_rl import kernel
from photon_rl.agents import AgentConfig
from photon_rl.envs import GridSpec, GridWorld3D
from photon_rl.harness import agent_rng
from photon_rl.mesh import NoiseSpec


def bench(backend, tables, cfg, agents, trials, seed):
    t0 = time.perf_counter()
    steps = [kernel.run_tree_ps(tables, cfg, agent_rng(seed, i), trials, backend=backend)[0] for i in range(agents)]
    return time.perf_counter() - t0, np.stack(steps)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=20)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    tables = GridWorld3D(GridSpec()).tables()
    cfg = AgentConfig(eta=0.11, gamma=0.999, damping_period=100, noise=NoiseSpec(args.sigma))
    backends = kernel.available_backends()
    results = {b: bench(b, tables, cfg, args.agents, args.trials, args.seed) for b in backends}

    print(f"{args.agents} agents x {args.trials} trials, sigma={args.sigma}")
    for name, (seconds, steps) in results.items():
        total = int(steps.sum())
        print(f"  {name:7s} {seconds:8.2f}s  {total / seconds:12,.0f} steps/s  ({total:,} steps)")
    if len(results) == 2:
        (tc, sc), (tp, sp) = results["cython"], results["python"]
        print(f"  speedup {tp / tc:.1f}x, outputs identical: {np.array_equal(sc, sp)}")
    else:
        print("  compiled kernel unavailable, only the Python backend was timed")


if __name__ == "__main__":
    main()
