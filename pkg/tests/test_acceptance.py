"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Population runs are shared between criteria through module-scoped fixtures.
"""
import math
import time

import numpy as np
import pytest

from conftest import CRITERIA
from photon_rl.envs import lambda_tables
from photon_rl.harness import AgentFailure, ExperimentConfig, run_experiment
from photon_rl.mesh import TreeTopology
from photon_rl.verify import (
    check_arcsin_tanh,
    check_defrag_multiset,
    check_equivalence,
    check_glow_law,
    check_mzi_correspondence,
    check_mzi_unitarity,
    check_normalization,
    check_round_trip,
    check_softmax_uniform,
)

GRID = {"dims": [10, 10, 10], "start": [3, 1, 4], "goal": [9, 9, 9], "reward": 8.0, "max_steps": 1000}
GRID_AGENT = {"model": "tree-PS", "eta": 0.11, "gamma": 0.999, "damping_period": 100}
SEED = 20240601


def report(number, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}"
    CRITERIA.append(line)
    print(line)
    assert ok, line


def grid_run(kind="gridworld-learning", trials=300, noise=None):
    data = {
        "experiment": {"kind": kind, "agents": 1000, "trials": trials, "seed": SEED},
        "agent": dict(GRID_AGENT),
        "environment": dict(GRID),
    }
    if noise is not None:
        data["noise"] = {"sigma": noise}
    t0 = time.perf_counter()
    result = run_experiment(ExperimentConfig.from_dict(data), write=False)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def noise_compare():
    return grid_run("gridworld-noise-compare", noise=0.1)


def random_walk_mean_steps(dims, start, goal, cap):
    """E[min(T, cap)] for a uniform random walk on a box, from absorbing-chain survival probabilities."""
    cells = [(x, y, z) for z in range(1, dims[2] + 1) for y in range(1, dims[1] + 1) for x in range(1, dims[0] + 1)]
    index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    P = np.zeros((n, n))
    for c, i in index.items():
        if c == goal:
            continue  # absorbed: no outgoing mass
        for axis in range(3):
            for step in (-1, 1):
                d = list(c)
                d[axis] += step
                j = index.get(tuple(d), i)
                P[i, j] += 1 / 6
    alive = np.zeros(n)
    alive[index[start]] = 1.0
    goal_i = index[goal]
    total = 0.0
    for _ in range(cap):
        total += alive.sum()  # P(T > t)
        alive = alive @ P
        alive[goal_i] = 0.0
    return total


def test_criterion_1_standard_equivalence():
    res = check_equivalence("standard")
    report(1, res.passed and res.seconds < 10, f"exact-standard vs normalized-h oracle, max gap {res.error:.2e} (tol 1e-10), {res.seconds:.1f}s")


def test_criterion_2_softmax_equivalence():
    res = check_equivalence("softmax")
    report(2, res.passed and res.seconds < 10, f"exact-softmax vs softmax-of-h oracle, max gap {res.error:.2e} (tol 1e-10), {res.seconds:.1f}s")


def test_criterion_3_programming_round_trip():
    res = check_round_trip()
    report(3, res.passed and res.seconds < 5, f"1000 distributions, depths 1-6, max error {res.error:.2e} (tol 1e-12), {res.seconds:.1f}s")


def test_criterion_4_gridworld_learning(noise_compare):
    result, seconds = noise_compare
    mean = result.columns["ideal_mean_steps"]
    std = result.columns["ideal_std_steps"]
    expected_first = random_walk_mean_steps((10, 10, 10), (3, 1, 4), (9, 9, 9), 1000)
    se_first = std[0] / math.sqrt(1000)
    starts_high = abs(mean[0] - expected_first) <= 4 * se_first
    ends_low = mean[-1] <= 38
    report(
        4,
        starts_high and ends_low,
        f"trial 1 mean {mean[0]:.1f} (random-walk oracle {expected_first:.1f} +- {4 * se_first:.1f}), "
        f"trial 300 mean {mean[-1]:.2f} (<= 38, shortest 19); ideal+noisy runs took {seconds:.0f}s",
    )


def test_criterion_5_noise_tolerance(noise_compare):
    result, _ = noise_compare
    ideal = result.columns["ideal_mean_steps"]
    noisy = result.columns["noisy_mean_steps"]
    gap = abs(noisy[-1] - ideal[-1]) / ideal[-1]
    at50, aborted = {0.1: noisy[49]}, {}
    for sigma in (0.05, 0.2):
        try:
            run, _ = grid_run(trials=50, noise=sigma)
        except AgentFailure as exc:
            # clamped noise can trap a photon on the unassigned leaves; observed, not asserted
            aborted[sigma] = f"aborted, agent {exc.index} trapped"
            continue
        at50[sigma] = run.columns["mean_steps"][49]
    helped = [s for s, v in sorted(at50.items()) if v < ideal[49]]
    sweep = ", ".join(f"sigma={s}: {at50[s]:.2f}" if s in at50 else f"sigma={s}: {aborted[s]}" for s in (0.05, 0.1, 0.2))
    report(
        5,
        gap <= 0.25,
        f"sigma=0.1 final {noisy[-1]:.2f} vs noiseless {ideal[-1]:.2f} (gap {gap:.1%}, limit 25%); "
        f"trial 50 noiseless {ideal[49]:.2f}, {sweep}; noise helped at trial 50: {helped or 'no'}",
    )


def test_criterion_6_defragmentation_boost():
    data = {
        "experiment": {"kind": "bandit-boost", "agents": 500, "trials": 2000, "seed": 7},
        "agent": {"model": "tree-PS", "gamma": 0.9975, "damping_period": 1, "eta": 1.0},
        "defrag": {"period": 1},
        "environment": {"d": [3, 4, 5, 6], "m": ["neighbour", "faraway"], "reward": 0.025},
    }
    t0 = time.perf_counter()
    result = run_experiment(ExperimentConfig.from_dict(data), write=False)
    seconds = time.perf_counter() - t0
    ok = seconds < 120
    parts = []
    for d in (3, 4, 5, 6):
        far = result.summary[f"mean_boost_d{d}_m{1 << d}"]
        near = result.summary[f"mean_boost_d{d}_m2"]
        ok &= far > 0 and far > near
        parts.append(f"d={d}: faraway {far:.2e} vs neighbour {near:.2e}")
    report(6, ok, "; ".join(parts) + f"; {seconds:.0f}s")


def lambda2_advantage(k, l, x):
    """Upper-minus-lower sub-action reward mass below an A2-layer node of the a1=1 subtree."""
    l2 = lambda_tables(x, 1.0)[1]
    if (k, l) == (2, 1):
        return l2[0] + l2[1] - l2[2] - l2[3]
    return l2[0] - l2[1] if (k, l) == (3, 1) else l2[2] - l2[3]


def test_criterion_7_factorized_bandit():
    xs = [0.0, 0.25, 0.5, 0.75, 1.0]
    data = {
        "experiment": {"kind": "bandit-factorized", "agents": 500, "trials": 3000, "seed": 11},
        "agent": {"model": "tree-PS", "gamma": 0.9975, "damping_period": 1, "eta": 1.0},
        "environment": {"x": xs, "epsilon": 0.004, "combine": "sum"},
    }
    t0 = time.perf_counter()
    result = run_experiment(ExperimentConfig.from_dict(data), write=False)
    seconds = time.perf_counter() - t0
    mean, se = {}, {}
    for row in result.nodes:
        mean.setdefault((row["k"], row["l"]), []).append(row["mean_p"])
        se.setdefault((row["k"], row["l"]), []).append(row["se_p"])
    mean = {k: np.array(v) for k, v in mean.items()}
    se = {k: np.array(v) for k, v in se.items()}
    problems = []

    root_ok = bool(np.all(mean[(1, 1)] >= 0.9))
    if not root_ok:
        problems.append("root")

    # A2 layer under the preferred first sub-action
    trends = []
    for node in ((2, 1), (3, 1), (3, 2)):
        adv = np.array([lambda2_advantage(*node, x) for x in xs])
        p, s = mean[node], se[node]
        for i, a in enumerate(adv):
            if a > 0 and p[i] < 0.5 - 3 * s[i] or a < 0 and p[i] > 0.5 + 3 * s[i]:
                problems.append(f"{node} side at x={xs[i]}")
        steps = np.sign(np.diff(adv))
        if np.all(steps == steps[0]) and steps[0] != 0:
            slack = 3 * np.sqrt(s[1:] ** 2 + s[:-1] ** 2)
            if np.any(steps[0] * np.diff(p) < -slack):
                problems.append(f"{node} not monotone")
            trends.append(f"{node} {'up' if steps[0] > 0 else 'down'}")

    # the first sub-action is almost never 2, so that whole subtree stays flat
    topo = TreeTopology(4)
    unreached = [topo.node(j) for j in range(topo.n_nodes) if j > 0 and topo.subtree_leaves(j).start >= 8]
    for node in unreached:
        if np.any(np.abs(mean[node] - 0.5) > 3 * se[node] + 0.01):
            problems.append(f"{node} moved")
    # A3 layer under the preferred first sub-action: between 0 (learned) and 0.5 (unvisited)
    for l in range(1, 5):
        p, s = mean[(4, l)], se[(4, l)]
        if np.any(p < -1e-12) or np.any(p > 0.5 + 3 * s):
            problems.append(f"(4, {l}) out of [0, 0.5]")

    ok = not problems and seconds < 300
    trace = "; ".join(f"({k},{l}) " + "/".join(f"{v:.3f}" for v in mean[(k, l)]) for k, l in ((1, 1), (2, 1), (3, 1), (3, 2)))
    report(
        7,
        ok,
        f"root min {mean[(1, 1)].min():.4f} (>= 0.9); monotone {', '.join(trends)}; {len(unreached)} unreached nodes flat; "
        f"p-hat over x {trace}; {seconds:.0f}s" + (f"; problems: {problems}" if problems else ""),
    )


def test_criterion_8_property_suites():
    t0 = time.perf_counter()
    checks = [
        check_mzi_unitarity(),
        check_mzi_correspondence(),
        check_glow_law(),
        check_normalization(),
        check_defrag_multiset(),
        check_softmax_uniform(),
        check_arcsin_tanh(),
    ]
    seconds = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and seconds < 5
    report(8, ok, "; ".join(f"{c.name} {c.error:.1e}<={c.tolerance:g}" for c in checks) + f"; {seconds:.2f}s")


DETERMINISM_CASES = [
    {"experiment": {"kind": "gridworld-learning", "agents": 40, "trials": 30}, "environment": GRID, "agent": GRID_AGENT},
    {"experiment": {"kind": "gridworld-learning", "agents": 6, "trials": 4}, "environment": {**GRID, "max_steps": 200}, "agent": {"model": "photonic-QL"}},
    {"experiment": {"kind": "gridworld-noise-compare", "agents": 20, "trials": 20}, "environment": GRID, "noise": {"sigma": 0.1, "mode": "per-shot"}},
    {"experiment": {"kind": "bandit-boost", "agents": 30, "trials": 200}, "environment": {"d": [3, 5]}},
    {"experiment": {"kind": "bandit-factorized", "agents": 30, "trials": 200}, "environment": {"x": [0.0, 0.5]}},
    {"experiment": {"kind": "bandit-factorized", "agents": 8, "trials": 50}, "agent": {"model": "exact-softmax", "gamma": 1.0}},
    {"experiment": {"kind": "equivalence-suite"}},
]


def test_criterion_9_determinism(tmp_path):
    mismatches = []
    for n, case in enumerate(DETERMINISM_CASES):
        base = ExperimentConfig.from_dict(case).with_value("experiment.seed", 99)
        degrees = (1, 4) if base.kind == "equivalence-suite" else (1, 1, 2, 4)
        blobs = []
        for i, workers in enumerate(degrees):
            out = tmp_path / f"{n}-{i}"
            run_experiment(base.with_value("experiment.parallel", workers), out)
            blobs.append((out / "result.csv").read_bytes())
            if (out / "nodes.csv").exists():
                blobs[-1] += (out / "nodes.csv").read_bytes()
        if any(b != blobs[0] for b in blobs):
            mismatches.append(base.kind)
    report(9, not mismatches, f"{len(DETERMINISM_CASES)} experiments re-run at parallelism 1/2/4, CSV bytes identical" + (f"; differ: {mismatches}" if mismatches else ""))
