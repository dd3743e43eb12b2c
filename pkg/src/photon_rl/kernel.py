"""Fast tree-PS population runner with a compiled backend and a pure-Python fallback.

The compiled module ``_ckernel`` is used when it was built; otherwise (or when
``PHOTON_RL_BACKEND=python`` is set) the pure-Python twin is loaded.  Both
draw from the caller's :class:`numpy.random.Generator` in the same order and
produce bit-identical results.
"""
from __future__ import annotations

import importlib
import os
from dataclasses import dataclass

import numpy as np

from photon_rl.agents.agent import AgentConfig
from photon_rl.envs import TransitionTables
from photon_rl.mesh import QUARTER_PI, TreeTopology

BACKENDS = ("cython", "python")
_MODULES = {"cython": "photon_rl._ckernel", "python": "photon_rl._pykernel"}


def load_backend(name: str):
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}")
    return importlib.import_module(_MODULES[name])


def available_backends() -> list:
    out = []
    for name in BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        out.append(name)
    return out


def _select():
    wanted = os.environ.get("PHOTON_RL_BACKEND", "").strip().lower()
    if wanted:
        return wanted, load_backend(wanted)
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()
KernelError = load_backend("python").KernelError


@dataclass
class KernelState:
    """Flat per-agent memory for every percept of a tabular environment."""

    depth: int
    n_actions: int
    chi: np.ndarray
    theta: np.ndarray
    action_map: np.ndarray
    cum: np.ndarray
    visited: np.ndarray
    counters: np.ndarray  # [global step, completed trials]

    @classmethod
    def fresh(cls, n_states: int, n_actions: int) -> "KernelState":
        topo = TreeTopology.for_actions(n_actions)
        amap = np.full((n_states, topo.n_leaves), -1, dtype=np.int64)
        amap[:, :n_actions] = np.arange(n_actions)
        return cls(
            depth=topo.depth,
            n_actions=n_actions,
            chi=np.zeros((n_states, topo.n_nodes)),
            theta=np.full((n_states, topo.n_nodes), QUARTER_PI),
            action_map=amap,
            cum=np.zeros((n_states, n_actions)),
            visited=np.zeros(n_states, dtype=np.uint8),
            counters=np.zeros(2, dtype=np.int64),
        )


def run_tree_ps(
    tables: TransitionTables,
    config: AgentConfig,
    rng: np.random.Generator,
    n_trials: int,
    state: KernelState | None = None,
    backend: str | None = None,
):
    """Run ``n_trials`` episodes of one tree-PS agent.

    Returns ``(steps, total_reward, state)``; pass ``state`` back in to keep
    training the same agent.
    """
    if config.model != "tree-PS":
        raise ValueError(f"the kernel only runs tree-PS, not {config.model}")
    impl = _impl if backend is None else load_backend(backend)
    if state is None:
        state = KernelState.fresh(tables.n_states, tables.n_actions)
    steps = np.zeros(n_trials, dtype=np.int64)
    reward = np.zeros(n_trials)
    noise = config.noise
    impl.run_trials(
        np.ascontiguousarray(tables.next_state, dtype=np.int32),
        np.ascontiguousarray(tables.reward, dtype=np.float64),
        np.ascontiguousarray(tables.terminal, dtype=np.uint8),
        int(tables.start), int(tables.max_steps), state.depth, state.n_actions,
        float(config.eta), float(config.gamma), int(config.damping_period),
        float(noise.theta_sigma), noise.mode == "per-shot", int(config.defrag_period),
        state.chi, state.theta, state.action_map, state.cum, state.visited, state.counters,
        rng, int(n_trials), steps, reward,
    )
    return steps, reward, state
