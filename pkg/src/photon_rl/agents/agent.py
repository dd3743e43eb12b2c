"""Learning agents driven by the episode loop.

Every agent follows the same small protocol::

    agent.begin_episode()
    action = agent.act(percept)
    agent.learn(reward, next_percept, done)
    ...
    agent.end_trial()

Agents own their random generator; nothing is shared between instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from photon_rl import memops
from photon_rl.agents.exact import ExactXiTree
from photon_rl.agents.memory import (
    ClipMemory,
    peakedness,
    ps_apply_damping,
    ps_apply_reward,
    ps_glow_decay,
    ps_glow_traverse,
    qlearning_update,
    sarsa_update,
)
from photon_rl.agents.oracles import TwoLayerPS, softmax_policy
from photon_rl.mesh import IDEAL, NoiseSpec, TreeTopology, sample_leaf

MODELS = (
    "tree-PS",
    "photonic-SARSA",
    "photonic-QL",
    "exact-standard",
    "exact-softmax",
    "oracle-2L-PS",
    "oracle-tabular",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    """Model selector and hyperparameters.

    ``gamma`` is a retention factor for the PS-type models (``chi <- gamma *
    chi`` every ``damping_period`` steps; the two-layer oracle uses the
    matching ``h <- 1 + gamma * (h - 1)``) and the discount factor for the
    SARSA/Q-learning models.
    """

    model: str = "tree-PS"
    eta: float = 0.11
    gamma: float = 0.999
    damping_period: int = 100
    alpha: float = 0.1
    beta: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    defrag_period: int = 0
    policy: str = "normalized-h"
    td_mode: str = "sarsa"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.damping_period < 1:
            raise ConfigError("damping_period must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.defrag_period < 0:
            raise ConfigError("defrag_period must be >= 0 (0 disables)")
        if self.policy not in ("normalized-h", "softmax"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.td_mode not in ("sarsa", "ql"):
            raise ConfigError(f"unknown td_mode {self.td_mode!r}")
        if self.model.startswith("exact-"):
            if self.gamma != 1.0:
                raise ConfigError("exact models mirror undamped two-layer PS; set gamma = 1")
            if self.noise.sigma > 0:
                raise ConfigError("exact models run on an ideal device; set noise sigma = 0")
            if self.defrag_period:
                raise ConfigError("defragmentation is only available for tree-PS")
        elif self.defrag_period and self.model != "tree-PS":
            raise ConfigError("defragmentation is only available for tree-PS")


def _categorical(probs: np.ndarray, rng) -> int:
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, probs.size - 1)


class Agent:
    def __init__(self, n_actions: int, config: AgentConfig, rng: np.random.Generator):
        self.n_actions = n_actions
        self.config = config
        self.rng = rng
        self.t = 0
        self.trials = 0

    def begin_episode(self) -> None:
        pass

    def act(self, percept: int) -> int:
        raise NotImplementedError

    def learn(self, reward: float, next_percept: int, done: bool) -> None:
        raise NotImplementedError

    def end_trial(self) -> None:
        self.trials += 1


class _TreeAgent(Agent):
    """Shared bookkeeping for agents that keep one :class:`ClipMemory` per percept."""

    def __init__(self, n_actions, config, rng):
        super().__init__(n_actions, config, rng)
        self.topology = TreeTopology.for_actions(n_actions)
        self.memories: dict[int, ClipMemory] = {}

    def memory(self, percept: int) -> ClipMemory:
        mem = self.memories.get(percept)
        if mem is None:
            mem = ClipMemory.fresh(self.n_actions, self.config.noise, self.rng, self.topology.depth)
            self.memories[percept] = mem
        return mem

    def _choose(self, mem: ClipMemory):
        leaf = sample_leaf(mem.tree, self.config.noise, self.rng)
        return leaf, self.topology.path(leaf)


class TreePSAgent(_TreeAgent):
    """Tree-PS with glow, periodic damping and optional defragmentation.

    Glow is cleared at the start of every episode.  Reward tallies used by
    defragmentation are glow-weighted per (percept, action) edge.
    """

    def __init__(self, n_actions, config, rng):
        super().__init__(n_actions, config, rng)
        self._glowing: dict[int, ClipMemory] = {}
        self._edge_glow: dict[tuple, float] = {}

    def begin_episode(self):
        for mem in self._glowing.values():
            mem.glow[:] = 0.0
        self._glowing.clear()
        self._edge_glow.clear()

    def act(self, percept):
        mem = self.memory(percept)
        leaf, path = self._choose(mem)
        ps_glow_traverse(mem, path)
        self._glowing.setdefault(percept, mem)
        action = int(mem.action_map[leaf])
        self._edge_glow[(percept, action)] = 1.0
        return action

    def learn(self, reward, next_percept, done):
        cfg = self.config
        if reward != 0.0:
            for mem in self._glowing.values():
                ps_apply_reward(mem, reward, cfg.noise, self.rng)
            for (p, a), g in self._edge_glow.items():
                if g > 0.0:
                    memops.record_reward(self.memories[p], a, g * reward)
        decay = 1.0 - cfg.eta
        for mem in self._glowing.values():
            ps_glow_decay(mem, cfg.eta)
        for key in self._edge_glow:
            self._edge_glow[key] *= decay
        self.t += 1
        if self.t % cfg.damping_period == 0 and cfg.gamma != 1.0:
            for mem in self.memories.values():
                ps_apply_damping(mem, cfg.gamma, cfg.noise, self.rng)

    def end_trial(self):
        super().end_trial()
        period = self.config.defrag_period
        if period and self.trials % period == 0:
            for mem in self.memories.values():
                memops.defragment(mem, self.config.noise, self.rng)


class PhotonicTDAgent(_TreeAgent):
    """Photonic SARSA (``mode="sarsa"``) or Q-learning (``mode="ql"``)."""

    def __init__(self, n_actions, config, rng, mode="sarsa"):
        super().__init__(n_actions, config, rng)
        self.mode = mode
        self._last = None

    def act(self, percept):
        mem = self.memory(percept)
        leaf, path = self._choose(mem)
        self._last = (mem, path)
        return int(mem.action_map[leaf])

    def learn(self, reward, next_percept, done):
        cfg = self.config
        mem, path = self._last
        if done:
            next_R = next_M = 0.0
        else:
            nxt = self.memory(next_percept)
            next_R, next_M = nxt.R, peakedness(nxt)
        if self.mode == "sarsa":
            sarsa_update(mem, path, reward, next_R, cfg.alpha, cfg.gamma, cfg.noise, self.rng)
        else:
            qlearning_update(mem, path, reward, next_R, next_M, cfg.alpha, cfg.gamma, cfg.noise, self.rng)
        self.t += 1


class ExactPSAgent(Agent):
    """Tree agent whose branch ratios follow two-layer PS exactly (ideal device, no damping)."""

    def __init__(self, n_actions, config, rng, mode="standard"):
        super().__init__(n_actions, config, rng)
        self.topology = TreeTopology.for_actions(n_actions)
        self.mode = mode
        self.trees: dict[int, ExactXiTree] = {}
        self._valid = np.arange(self.topology.n_leaves) < n_actions
        self._edge_glow: dict[tuple, float] = {}

    def tree(self, percept) -> ExactXiTree:
        if percept not in self.trees:
            self.trees[percept] = ExactXiTree(self.topology.depth, self.mode, self.config.beta)
        return self.trees[percept]

    def begin_episode(self):
        self._edge_glow.clear()

    def act(self, percept):
        leaf = sample_leaf(self.tree(percept).phase_tree(self._valid), IDEAL, self.rng)
        self._edge_glow[(percept, leaf)] = 1.0
        return leaf

    def learn(self, reward, next_percept, done):
        if reward != 0.0:
            for (p, leaf), g in self._edge_glow.items():
                if g > 0.0:
                    self.trees[p].update(leaf, g * reward)
        decay = 1.0 - self.config.eta
        for key in self._edge_glow:
            self._edge_glow[key] *= decay
        self.t += 1


class TwoLayerPSAgent(Agent):
    """Reference two-layer PS on the same damping schedule as tree-PS."""

    def __init__(self, n_actions, config, rng):
        super().__init__(n_actions, config, rng)
        self.clips: dict[int, TwoLayerPS] = {}
        self._glowing: dict[int, TwoLayerPS] = {}

    def clip(self, percept) -> TwoLayerPS:
        if percept not in self.clips:
            self.clips[percept] = TwoLayerPS(self.n_actions, self.config.policy, self.config.beta)
        return self.clips[percept]

    def begin_episode(self):
        for c in self._glowing.values():
            c.g[:] = 0.0
        self._glowing.clear()

    def act(self, percept):
        c = self.clip(percept)
        action = _categorical(c.probabilities(), self.rng)
        c.traverse(action)
        self._glowing.setdefault(percept, c)
        return action

    def learn(self, reward, next_percept, done):
        cfg = self.config
        if reward != 0.0:
            for c in self._glowing.values():
                c.reinforce(reward)
        for c in self._glowing.values():
            c.decay_glow(cfg.eta)
        self.t += 1
        if self.t % cfg.damping_period == 0 and cfg.gamma != 1.0:
            for c in self.clips.values():
                c.reinforce(0.0, damping=1.0 - cfg.gamma)


class TabularAgent(Agent):
    """Tabular SARSA / Q-learning with a softmax policy."""

    def __init__(self, n_actions, config, rng):
        super().__init__(n_actions, config, rng)
        self.q: dict[int, np.ndarray] = {}
        self._last = None
        self._pending = None

    def values(self, percept) -> np.ndarray:
        if percept not in self.q:
            self.q[percept] = np.zeros(self.n_actions)
        return self.q[percept]

    def _update(self, s, a, target):
        alpha = self.config.alpha
        q = self.values(s)
        q[a] = (1.0 - alpha) * q[a] + alpha * target

    def begin_episode(self):
        self._pending = None

    def act(self, percept):
        q = self.values(percept)
        action = _categorical(softmax_policy(q, self.config.beta), self.rng)
        if self._pending is not None:
            s, a, r = self._pending
            self._update(s, a, r + self.config.gamma * q[action])
            self._pending = None
        self._last = (percept, action)
        return action

    def learn(self, reward, next_percept, done):
        s, a = self._last
        if done:
            self._update(s, a, reward)
        elif self.config.td_mode == "ql":
            self._update(s, a, reward + self.config.gamma * self.values(next_percept).max())
        else:
            self._pending = (s, a, reward)
        self.t += 1


def make_agent(config: AgentConfig, n_actions: int, rng: np.random.Generator) -> Agent:
    model = config.model
    if model == "tree-PS":
        return TreePSAgent(n_actions, config, rng)
    if model == "photonic-SARSA":
        return PhotonicTDAgent(n_actions, config, rng, "sarsa")
    if model == "photonic-QL":
        return PhotonicTDAgent(n_actions, config, rng, "ql")
    if model == "exact-standard":
        return ExactPSAgent(n_actions, config, rng, "standard")
    if model == "exact-softmax":
        return ExactPSAgent(n_actions, config, rng, "softmax")
    if model == "oracle-2L-PS":
        return TwoLayerPSAgent(n_actions, config, rng)
    return TabularAgent(n_actions, config, rng)
