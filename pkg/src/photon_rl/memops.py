"""Restructuring a clip's memory: reward tallies, defragmentation and pruning."""
from __future__ import annotations

import numpy as np

from photon_rl.agents.memory import ClipMemory
from photon_rl.mesh import IDEAL, NoiseSpec, chi_of_theta, leaf_distribution, program_angles

BRANCHES = {"upper": 0, "lower": 1, 0: 0, 1: 1}


def record_reward(memory: ClipMemory, action: int, lam: float) -> ClipMemory:
    if not 0 <= action < memory.n_actions:
        raise IndexError(f"action {action} out of range")
    memory.cumulative_reward[action] += lam
    return memory


def defrag_order(memory: ClipMemory) -> list:
    """Actions in their new mode order: by tally, descending, ties keep current order."""
    current = memory.action_map[: memory.n_actions].tolist()
    tally = memory.cumulative_reward
    return sorted(current, key=lambda a: -tally[a])


def defragment(memory: ClipMemory, noise: NoiseSpec = IDEAL, rng=None) -> bool:
    """Re-sort actions over the output modes by cumulative reward.

    The per-action probabilities are kept: the current leaf distribution is
    permuted along with the actions and the tree is re-programmed, with
    ``chi`` recovered from the new angles.  Unassigned leaves keep their mass.
    Returns whether anything moved.
    """
    if np.any(memory.override >= 0):
        raise ValueError("cannot defragment a pruned memory")
    n = memory.n_actions
    current = memory.action_map[:n].tolist()
    order = defrag_order(memory)
    if order == current:
        return False
    probs = leaf_distribution(memory.ideal_tree).tolist()
    old_leaf = {a: i for i, a in enumerate(current)}
    q = [probs[old_leaf[a]] for a in order] + probs[n:]
    theta = program_angles(q)
    memory.chi[:] = [chi_of_theta(th) for th in theta]
    memory.action_map[:n] = order
    memory.write_phases(range(memory.topology.n_nodes), noise, rng)
    return True


def prune(memory: ClipMemory, k: int, l: int, branch) -> ClipMemory:
    """Force node ``(k, l)`` onto ``branch``, isolating the other subtree."""
    if branch not in BRANCHES:
        raise ValueError(f"branch must be 'upper' or 'lower', got {branch!r}")
    j = memory.topology.index(k, l)
    previous = memory.override[j]
    memory.override[j] = BRANCHES[branch]
    m = memory.topology.n_nodes
    live = memory.reachable()[m:] & (memory.action_map >= 0)
    if not live.any():
        memory.override[j] = previous
        raise ValueError("pruning would cut off every action")
    return memory


def unprune(memory: ClipMemory, k: int, l: int) -> ClipMemory:
    memory.override[memory.topology.index(k, l)] = -1
    return memory
