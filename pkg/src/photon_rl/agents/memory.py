"""Per-clip learnable state and the photonic update rules acting on it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from photon_rl.mesh import (
    IDEAL,
    QUARTER_PI,
    NoiseSpec,
    PhaseTree,
    TreeTopology,
    leaf_distribution,
    perturb_phase,
    theta_of_chi,
)


@dataclass
class ClipMemory:
    """Learnable state of one percept clip: a beamsplitter tree plus bookkeeping.

    ``chi`` is the learned quantity; the ideal angle is always
    ``theta_of_chi(chi)``.  ``phase`` holds the angles actually written to the
    device, which differ from the ideal ones only under per-adjustment noise.
    Leaves beyond ``n_actions`` start unassigned (``action_map == -1``).
    """

    topology: TreeTopology
    n_actions: int
    chi: np.ndarray = None
    phase: np.ndarray = None
    glow: np.ndarray = None
    glow_sign: np.ndarray = None
    action_map: np.ndarray = None
    cumulative_reward: np.ndarray = None
    override: np.ndarray = None
    R: float = 0.0

    def __post_init__(self):
        m, leaves = self.topology.n_nodes, self.topology.n_leaves
        if not 1 <= self.n_actions <= leaves:
            raise ValueError(f"{self.n_actions} actions do not fit on {leaves} leaves")
        if self.chi is None:
            self.chi = np.zeros(m)
        if self.phase is None:
            self.phase = np.full(m, QUARTER_PI)
        if self.glow is None:
            self.glow = np.zeros(m)
        if self.glow_sign is None:
            self.glow_sign = np.ones(m, dtype=np.int8)
        if self.action_map is None:
            self.action_map = np.full(leaves, -1, dtype=np.int64)
            self.action_map[: self.n_actions] = np.arange(self.n_actions)
        if self.cumulative_reward is None:
            self.cumulative_reward = np.zeros(self.n_actions)
        if self.override is None:
            self.override = np.full(m, -1, dtype=np.int8)

    @classmethod
    def fresh(cls, n_actions: int, noise: NoiseSpec = IDEAL, rng=None, depth: Optional[int] = None):
        """New memory at the uniform policy, phases written once (noisy if configured)."""
        topo = TreeTopology(depth) if depth else TreeTopology.for_actions(n_actions)
        mem = cls(topo, n_actions)
        if noise.per_adjustment:
            mem.write_phases(range(topo.n_nodes), noise, rng)
        return mem

    @property
    def theta(self) -> np.ndarray:
        return np.array([theta_of_chi(c) for c in self.chi])

    @property
    def tree(self) -> PhaseTree:
        """Device view: the angles as written, with prune overrides and valid leaves."""
        return PhaseTree(self.topology, self.phase, self.override, self.action_map >= 0)

    @property
    def ideal_tree(self) -> PhaseTree:
        return PhaseTree(self.topology, self.theta, self.override, self.action_map >= 0)

    def write_phases(self, nodes, noise: NoiseSpec = IDEAL, rng=None) -> None:
        """Re-derive the device angle of ``nodes`` from ``chi``."""
        noisy = noise.per_adjustment
        for j in nodes:
            th = theta_of_chi(self.chi[j])
            self.phase[j] = perturb_phase(th, noise, rng) if noisy else th

    def leaf_of(self, action: int) -> int:
        hits = np.flatnonzero(self.action_map == action)
        if hits.size != 1:
            raise KeyError(f"action {action} is not mapped to exactly one leaf")
        return int(hits[0])

    def action_probabilities(self) -> np.ndarray:
        """Per-action selection probability (re-injection renormalizes over valid leaves)."""
        leaves = leaf_distribution(self.ideal_tree)
        probs = np.zeros(self.n_actions)
        valid = self.action_map >= 0
        probs[self.action_map[valid]] = leaves[valid]
        return probs / probs.sum()

    def reachable(self) -> np.ndarray:
        """Heap-indexed mask of nodes a photon can still reach given the overrides."""
        m = self.topology.n_nodes
        reach = np.zeros(2 * m + 1, dtype=bool)
        reach[0] = True
        for j in range(m):
            forced = self.override[j]
            reach[2 * j + 1] = reach[j] and forced != 1
            reach[2 * j + 2] = reach[j] and forced != 0
        return reach

    def active_nodes(self) -> np.ndarray:
        """Nodes that still take part in learning: reachable and not overridden."""
        m = self.topology.n_nodes
        return self.reachable()[:m] & (self.override < 0)


def ps_glow_traverse(memory: ClipMemory, path) -> ClipMemory:
    """Light up the nodes on ``path`` (``(node, branch)`` pairs, branch 0 = upper)."""
    for node, bit in path:
        memory.glow[node] = 1.0
        memory.glow_sign[node] = 1 if bit == 0 else -1
    return memory


def ps_glow_decay(memory: ClipMemory, eta: float) -> ClipMemory:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"glow parameter must lie in [0, 1], got {eta}")
    memory.glow *= 1.0 - eta
    return memory


def ps_apply_reward(memory: ClipMemory, lam: float, noise: NoiseSpec = IDEAL, rng=None) -> ClipMemory:
    """Add ``sign * g * lam`` to every glowing node.

    The sign is negative for nodes last left through their lower branch, so
    rewarding a lower-branch choice pushes ``chi`` down.
    """
    if lam == 0.0:
        return memory
    active = memory.active_nodes()
    touched = []
    for j in range(memory.topology.n_nodes):
        g = memory.glow[j]
        if g > 0.0 and active[j]:
            memory.chi[j] += memory.glow_sign[j] * g * lam
            touched.append(j)
    memory.write_phases(touched, noise, rng)
    return memory


def ps_apply_damping(memory: ClipMemory, gamma: float, noise: NoiseSpec = IDEAL, rng=None) -> ClipMemory:
    """Relax every ``chi`` towards the flat policy: ``chi <- gamma * chi``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping factor must lie in [0, 1], got {gamma}")
    if gamma == 1.0:
        return memory
    active = memory.active_nodes()
    touched = []
    for j in range(memory.topology.n_nodes):
        if active[j] and memory.chi[j] != 0.0:
            memory.chi[j] *= gamma
            touched.append(j)
    memory.write_phases(touched, noise, rng)
    return memory


def peakedness(memory: ClipMemory) -> float:
    """``max`` over reachable assigned leaves of ``tanh(mean |chi| along the path)``."""
    topo = memory.topology
    reach = memory.reachable()
    m = topo.n_nodes
    best = 0.0
    for leaf in range(topo.n_leaves):
        if memory.action_map[leaf] < 0 or not reach[m + leaf]:
            continue
        total = sum(abs(memory.chi[node]) for node, _ in topo.path(leaf))
        best = max(best, math.tanh(total / topo.depth))
    return best


def _td_update(memory: ClipMemory, path, reward, next_R, alpha, gamma, target, noise, rng):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"learning rate must lie in (0, 1], got {alpha}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"discount must lie in [0, 1], got {gamma}")
    active = memory.active_nodes()
    touched = []
    for node, bit in path:
        if not active[node]:
            continue
        sign = 1.0 if bit == 0 else -1.0
        memory.chi[node] = (1.0 - alpha) * memory.chi[node] + sign * alpha * target
        touched.append(node)
    memory.R = (1.0 - alpha) * memory.R + alpha * (reward + gamma * next_R)
    memory.write_phases(touched, noise, rng)
    return memory


def sarsa_update(memory, path, reward, next_R, alpha, gamma, noise=IDEAL, rng=None) -> ClipMemory:
    """Photonic SARSA step on the nodes of the traversed ``path``."""
    return _td_update(memory, path, reward, next_R, alpha, gamma, reward + gamma * next_R, noise, rng)


def qlearning_update(memory, path, reward, next_R, next_M, alpha, gamma, noise=IDEAL, rng=None) -> ClipMemory:
    """Photonic Q-learning step; the successor's confidence is scaled by its peakedness."""
    target = reward + gamma * next_R * next_M
    return _td_update(memory, path, reward, next_R, alpha, gamma, target, noise, rng)
