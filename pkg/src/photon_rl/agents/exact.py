"""Local updates on branch ratios that make a tree reproduce two-layer PS exactly.

Every node keeps the ratio ``xi = p_upper / (1 - p_upper)``; the beamsplitter
angle follows as ``arctan(sqrt(xi))``.  A reward ``lam`` on leaf ``c`` is
mirrored by touching only the nodes on the root-to-``c`` path.
"""
from __future__ import annotations

import math

import numpy as np

from photon_rl.mesh import PhaseTree, TreeTopology, leaf_distribution

MODES = ("standard", "softmax")


class ExactXiTree:
    """Branch-ratio state of one clip.

    In ``standard`` mode the tree tracks normalized h-values and also keeps
    ``count``, the total h-mass below every node (``2**(n-k+1)`` at start).
    In ``softmax`` mode it tracks ``softmax(beta * h)``.
    """

    def __init__(self, depth: int, mode: str = "standard", beta: float = 1.0):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if beta < 0:
            raise ValueError("beta must be >= 0")
        self.topology = TreeTopology(depth)
        self.mode = mode
        self.beta = beta
        m = self.topology.n_nodes
        self.xi = np.ones(m)
        self.count = np.array([float(1 << (depth - k + 1)) for k, _ in self.topology.nodes()])

    def update(self, leaf: int, lam: float) -> "ExactXiTree":
        if self.mode == "standard":
            return exact_update_standard(self, leaf, lam)
        return exact_update_softmax(self, leaf, lam, self.beta)

    def phase_tree(self, valid=None) -> PhaseTree:
        theta = [math.atan(math.sqrt(x)) for x in self.xi]
        return PhaseTree(self.topology, np.array(theta), valid=valid)

    def leaf_distribution(self) -> np.ndarray:
        return leaf_distribution(self.phase_tree())


def exact_update_standard(tree: ExactXiTree, leaf: int, lam: float) -> ExactXiTree:
    """Mirror ``h[leaf] += lam`` under normalized-h probabilities."""
    if lam < 0:
        raise ValueError("reward must be >= 0")
    if lam == 0:
        return tree
    for node, bit in tree.topology.path(leaf):
        xi, n = tree.xi[node], tree.count[node]
        # bit 0 (upper): xi + (xi + 1) lam / N; bit 1: xi / (1 + (1 + xi) lam / N)
        inner = 1.0 + (1.0 + xi ** (-1) ** (bit + 1)) * lam / n
        tree.xi[node] = xi * inner ** (-1) ** bit
        tree.count[node] = n + lam
    return tree


def exact_update_softmax(tree: ExactXiTree, leaf: int, lam: float, beta: float) -> ExactXiTree:
    """Mirror ``h[leaf] += lam`` under ``softmax(beta * h)`` probabilities.

    The factor multiplying ``exp(beta * lam) - 1`` at node ``(k, l)`` is the
    probability of reaching ``leaf`` from the child on its path, written with
    the ratios of the nodes strictly below ``(k, l)``:
    ``prod xi_v**(1 - c_v) / (1 + xi_v)`` with ``c_v`` the branch bit.  Nodes
    are processed top-down so every factor sees pre-update ratios.
    """
    if lam < 0:
        raise ValueError("reward must be >= 0")
    if lam == 0:
        return tree
    boost = math.expm1(beta * lam)
    path = tree.topology.path(leaf)
    for i, (node, bit) in enumerate(path):
        reach = 1.0
        for below, c in path[i + 1:]:
            xv = tree.xi[below]
            reach *= (xv if c == 0 else 1.0) / (1.0 + xv)
        factor = 1.0 + boost * reach
        tree.xi[node] = tree.xi[node] * factor if bit == 0 else tree.xi[node] / factor
    return tree
