"""Reference learners: softmax policy, tabular SARSA/Q-learning and two-layer PS.

These are the textbook models the photonic rules are checked against.
"""
from __future__ import annotations

import numpy as np


def softmax_policy(values, beta: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not np.all(np.isfinite(values)):
        raise ValueError("softmax needs finite values")
    z = beta * (values - values.max())
    w = np.exp(z)
    return w / w.sum()


class TabularQ:
    """Q-table over ``n_states x n_actions`` with SARSA or Q-learning targets."""

    def __init__(self, n_states: int, n_actions: int, initial: float = 0.0):
        self.q = np.full((n_states, n_actions), float(initial))

    def update(self, s, a, reward, s_next, a_next, alpha, gamma, mode="sarsa", terminal=False):
        self.q = oracle_tabular_update(self.q, s, a, reward, s_next, a_next, alpha, gamma, mode, terminal)
        return self

    def policy(self, s, beta):
        return softmax_policy(self.q[s], beta)

    def value(self, s, beta) -> float:
        """Expected return of state ``s`` under the softmax policy."""
        return float(self.policy(s, beta) @ self.q[s])


def oracle_tabular_update(q, s, a, reward, s_next, a_next, alpha, gamma, mode="sarsa", terminal=False):
    """One SARSA (``f`` = identity at ``a_next``) or Q-learning (``f`` = max) step.

    ``q`` is updated in place and returned.  With ``terminal`` the bootstrap
    term is dropped.
    """
    if mode not in ("sarsa", "ql"):
        raise ValueError(f"unknown tabular mode {mode!r}")
    if terminal:
        follow = 0.0
    elif mode == "sarsa":
        follow = q[s_next, a_next]
    else:
        follow = q[s_next].max()
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * (reward + gamma * follow)
    return q


class TwoLayerPS:
    """Two-layer projective simulation for a single percept clip.

    ``damping`` follows the h-value convention: ``h <- h - damping * (h - 1)``,
    so 0 means no forgetting and 1 resets every weight to 1 each update.
    """

    def __init__(self, n_actions: int, policy_mode: str = "normalized-h", beta: float = 1.0):
        if policy_mode not in ("normalized-h", "softmax"):
            raise ValueError(f"unknown policy mode {policy_mode!r}")
        self.h = np.ones(n_actions)
        self.g = np.zeros(n_actions)
        self.policy_mode = policy_mode
        self.beta = beta

    def probabilities(self) -> np.ndarray:
        if self.policy_mode == "softmax":
            return softmax_policy(self.h, self.beta)
        return self.h / self.h.sum()

    def traverse(self, edge: int) -> None:
        self.g[edge] = 1.0

    def reinforce(self, lam: float, damping: float = 0.0) -> None:
        if not 0.0 <= damping <= 1.0:
            raise ValueError(f"damping must lie in [0, 1], got {damping}")
        self.h = self.h - damping * (self.h - 1.0) + self.g * lam

    def decay_glow(self, eta: float) -> None:
        self.g *= 1.0 - eta

    def reward_edge(self, edge: int, lam: float) -> None:
        """Bare ``h[edge] += lam``, the increment the exact tree rules mirror."""
        self.h[edge] += lam


def oracle_2L_update(oracle: TwoLayerPS, edge: int, lam: float, damping: float, eta: float) -> TwoLayerPS:
    """Traverse ``edge``, apply the damped glow-weighted update, then decay glow."""
    oracle.traverse(edge)
    oracle.reinforce(lam, damping)
    oracle.decay_glow(eta)
    return oracle
