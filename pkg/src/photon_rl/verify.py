"""Self-checks: exact-update equivalence, phase programming and device properties.

Each check returns a :class:`CheckResult`; ``run_suite`` runs all of them and
is what ``photon-rl verify`` prints.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from photon_rl.agents import ClipMemory, ExactXiTree, TwoLayerPS, ps_glow_decay, ps_glow_traverse, softmax_policy
from photon_rl.agents.memory import ps_apply_reward
from photon_rl.memops import defragment
from photon_rl.mesh import leaf_distribution, leaf_probability, mzi_unitary, program_tree

# max |arcsin(tanh x) - (pi/2) tanh(2x/pi)| over x in [-10, 10], attained near |x| = 2.1058
ARCSIN_TANH_MAX_GAP = 0.040951172379279


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float
    seconds: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: error={self.error:.3g} tol={self.tolerance:g} [{self.seconds:.2f}s]{extra}"


def _result(name, error, tol, t0, detail="", strict=False):
    ok = error == 0.0 if strict else error <= tol
    return CheckResult(name, bool(ok), float(error), tol, time.perf_counter() - t0, detail)


def equivalence_error(mode: str, depth: int, rng, steps: int = 100, beta: float = 1.0, max_reward: float = 1.0) -> float:
    """Worst per-step gap between an exact tree and its two-layer oracle on one random reward sequence."""
    tree = ExactXiTree(depth, mode, beta)
    oracle = TwoLayerPS(1 << depth, "normalized-h" if mode == "standard" else "softmax", beta)
    worst = 0.0
    for _ in range(steps):
        leaf = int(rng.integers(1 << depth))
        lam = float(rng.uniform(0.0, max_reward))
        tree.update(leaf, lam)
        oracle.reward_edge(leaf, lam)
        gap = float(np.max(np.abs(tree.leaf_distribution() - oracle.probabilities())))
        worst = max(worst, gap)
    return worst


def check_equivalence(mode: str, depths=(1, 2, 3, 4), sequences: int = 200, steps: int = 100, seed: int = 2024, tol: float = 1e-10):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for depth in depths:
        for _ in range(sequences):
            worst = max(worst, equivalence_error(mode, depth, rng, steps))
    return _result(f"exact-{mode} equivalence", worst, tol, t0, f"depths {depths[0]}-{depths[-1]}, {sequences}x{steps}")


def check_round_trip(samples: int = 1000, depths=range(1, 7), seed: int = 7, tol: float = 1e-12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    depths = list(depths)
    for i in range(samples):
        depth = depths[i % len(depths)]
        q = rng.dirichlet(np.ones(1 << depth))
        tree = program_tree(q)
        got = np.array([leaf_probability(tree, leaf) for leaf in range(q.size)])
        worst = max(worst, float(np.max(np.abs(got - q))))
    return _result("programming round-trip", worst, tol, t0, f"{samples} distributions")


def check_mzi_unitarity(seed: int = 11, tol: float = 1e-14):
    t0 = time.perf_counter()
    worst = 0.0
    for phi in np.random.default_rng(seed).uniform(-2 * np.pi, 2 * np.pi, 500):
        u = mzi_unitary(phi)
        worst = max(worst, float(np.max(np.abs(u.conj().T @ u - np.eye(2)))))
    return _result("MZI unitarity", worst, tol, t0)


def check_mzi_correspondence(seed: int = 12, tol: float = 1e-14):
    t0 = time.perf_counter()
    worst = 0.0
    for th in np.random.default_rng(seed).uniform(0.0, np.pi / 2, 500):
        worst = max(worst, abs(abs(mzi_unitary(2 * th)[0, 0]) ** 2 - math.sin(th) ** 2))
    return _result("MZI phase correspondence", worst, tol, t0)


def check_glow_law(tol: float = 1e-14):
    t0 = time.perf_counter()
    worst = 0.0
    for eta in (0.0, 0.11, 0.5, 0.9, 1.0):
        mem = ClipMemory.fresh(4)
        ps_glow_traverse(mem, mem.topology.path(2))
        for dt in range(1, 60):
            ps_glow_decay(mem, eta)
            worst = max(worst, abs(mem.glow[0] - (1.0 - eta) ** dt))
    return _result("glow law", worst, tol, t0)


def check_normalization(samples: int = 300, seed: int = 13, tol: float = 1e-12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        depth = int(rng.integers(1, 9))
        mem = ClipMemory.fresh(1 << depth)
        mem.chi[:] = rng.normal(0.0, 3.0, mem.chi.size)
        mem.write_phases(range(mem.chi.size))
        worst = max(worst, abs(math.fsum(leaf_distribution(mem.tree)) - 1.0))
    return _result("leaf normalization", worst, tol, t0)


def check_defrag_multiset(samples: int = 200, seed: int = 14, tol: float = 1e-12):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        n_actions = int(rng.integers(2, 33))
        mem = ClipMemory.fresh(n_actions)
        mem.chi[:] = rng.uniform(-3.0, 3.0, mem.chi.size)
        mem.write_phases(range(mem.chi.size))
        mem.cumulative_reward[:] = rng.exponential(1.0, n_actions)
        before = np.sort(leaf_distribution(mem.tree))
        defragment(mem)
        after = np.sort(leaf_distribution(mem.tree))
        worst = max(worst, float(np.max(np.abs(after - before))))
    return _result("defrag multiset invariance", worst, tol, t0)


def check_softmax_uniform(seed: int = 15):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(1, 40):
        p = softmax_policy(rng.normal(0.0, 50.0, n), 0.0)
        worst = max(worst, float(np.max(np.abs(p - 1.0 / n))))
    return _result("softmax beta=0 uniformity", worst, 0.0, t0, strict=True)


def arcsin_tanh_gap(lo: float = -10.0, hi: float = 10.0, step: float = 1e-4) -> float:
    x = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    return float(np.max(np.abs(np.arcsin(np.tanh(x)) - np.pi / 2 * np.tanh(2 * x / np.pi))))


def check_arcsin_tanh(tol: float = 1e-6):
    t0 = time.perf_counter()
    gap = arcsin_tanh_gap()
    return _result("arcsin/tanh approximation", abs(gap - ARCSIN_TANH_MAX_GAP), tol, t0, f"max gap {gap:.12f}")


def check_sign_correspondence(steps: int = 200, seed: int = 16, tol: float = 1e-12):
    """Depth-1 tree-PS with lam/pi rewards tracks (h_upper - h_lower)/pi of a two-layer agent."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mem = ClipMemory.fresh(2)
    oracle = TwoLayerPS(2)
    worst = 0.0
    for _ in range(steps):
        leaf = int(rng.integers(2))
        lam = float(rng.uniform(0.0, 2.0))
        ps_glow_traverse(mem, mem.topology.path(leaf))
        ps_apply_reward(mem, lam / math.pi)
        ps_glow_decay(mem, 1.0)
        oracle.traverse(leaf)
        oracle.reinforce(lam, damping=0.0)
        oracle.decay_glow(1.0)
        worst = max(worst, abs(mem.chi[0] - (oracle.h[0] - oracle.h[1]) / math.pi))
    return _result("chi vs h sign correspondence", worst, tol, t0)


CHECKS = (
    lambda: check_equivalence("standard"),
    lambda: check_equivalence("softmax"),
    check_round_trip,
    check_mzi_unitarity,
    check_mzi_correspondence,
    check_glow_law,
    check_normalization,
    check_defrag_multiset,
    check_softmax_uniform,
    check_arcsin_tanh,
    check_sign_correspondence,
)


def run_suite(echo=None) -> list:
    results = []
    for check in CHECKS:
        res = check()
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
