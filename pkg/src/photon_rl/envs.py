"""Task environments: 3D GridWorld and combinatorial multi-armed bandits.

All environments are deterministic and expose the same interaction contract
(``reset``/``step``) plus a :class:`TransitionTables` view used by the
compiled episode loop.  Actions and percepts are 0-based integers.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class ProtocolError(RuntimeError):
    """Raised when an environment is driven outside its reset/step contract."""


@dataclass(frozen=True)
class TransitionTables:
    """Deterministic episodic MDP in array form."""

    next_state: np.ndarray  # int32 [S, A]
    reward: np.ndarray  # float64 [S, A]
    terminal: np.ndarray  # uint8 [S, A]
    start: int
    max_steps: int

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


class Environment:
    n_actions: int
    n_percepts: int

    def reset(self) -> int:
        raise NotImplementedError

    def step(self, action: int) -> tuple[int, float, bool]:
        raise NotImplementedError

    def tables(self) -> TransitionTables:
        raise NotImplementedError


# --------------------------------------------------------------------- GridWorld

ACTIONS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
ACTION_NAMES = ("x+", "x-", "y+", "y-", "z+", "z-")


@dataclass(frozen=True)
class GridSpec:
    """Box-shaped grid with 1-based coordinates ``[1, X] x [1, Y] x [1, Z]``."""

    dims: tuple = (10, 10, 10)
    start: tuple = (3, 1, 4)
    goal: tuple = (9, 9, 9)
    walls: frozenset = field(default_factory=frozenset)
    reward: float = 8.0
    max_steps: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        object.__setattr__(self, "walls", frozenset(tuple(int(v) for v in w) for w in self.walls))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"grid dimensions must be three positive integers, got {self.dims}")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self.inside(cell):
                raise ValueError(f"{name} {cell} lies outside the grid")
            if cell in self.walls:
                raise ValueError(f"{name} {cell} is a wall")
        for w in self.walls:
            if not self.inside(w):
                raise ValueError(f"wall {w} lies outside the grid")
        if self.max_steps < 1:
            raise ValueError("episode cap must be >= 1")

    def inside(self, cell) -> bool:
        return len(cell) == 3 and all(1 <= c <= d for c, d in zip(cell, self.dims))

    def blocked(self, cell) -> bool:
        return not self.inside(cell) or cell in self.walls

    @property
    def n_cells(self) -> int:
        x, y, z = self.dims
        return x * y * z

    def encode(self, cell) -> int:
        x, y, z = cell
        X, Y, _ = self.dims
        return (x - 1) + X * ((y - 1) + Y * (z - 1))

    def decode(self, index: int) -> tuple:
        X, Y, _ = self.dims
        x = index % X
        y = (index // X) % Y
        z = index // (X * Y)
        return (x + 1, y + 1, z + 1)

    @classmethod
    def with_random_walls(cls, density: float, seed: int, **kwargs) -> "GridSpec":
        """Walls on a seeded random subset of cells, never on start or goal."""
        if not 0.0 <= density < 1.0:
            raise ValueError("wall density must lie in [0, 1)")
        base = cls(**kwargs)
        rng = np.random.default_rng(seed)
        walls = set()
        for cell in itertools.product(*(range(1, d + 1) for d in base.dims)):
            if cell in (base.start, base.goal):
                continue
            if rng.random() < density:
                walls.add(cell)
        spec = cls(**{**kwargs, "walls": frozenset(walls)})
        min_path_length(spec)
        return spec


def gridworld_step(spec: GridSpec, position, action: int) -> tuple[tuple, float, bool]:
    """Pure move rule: blocked moves cost a step but leave the agent in place."""
    if not 0 <= action < len(ACTIONS):
        raise IndexError(f"action {action} out of range")
    target = tuple(p + d for p, d in zip(position, ACTIONS[action]))
    if spec.blocked(target):
        target = tuple(position)
    if target == spec.goal:
        return target, spec.reward, True
    return target, 0.0, False


def min_path_length(spec: GridSpec) -> int:
    """Breadth-first shortest path from start to goal."""
    seen = {spec.start: 0}
    queue = deque([spec.start])
    while queue:
        cell = queue.popleft()
        if cell == spec.goal:
            return seen[cell]
        for move in ACTIONS:
            nxt = tuple(c + d for c, d in zip(cell, move))
            if not spec.blocked(nxt) and nxt not in seen:
                seen[nxt] = seen[cell] + 1
                queue.append(nxt)
    raise ValueError(f"goal {spec.goal} is unreachable from {spec.start}")


class GridWorld3D(Environment):
    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.n_actions = len(ACTIONS)
        self.n_percepts = spec.n_cells
        self.position = None
        self.steps = 0
        self.done = True

    def reset(self) -> int:
        self.position = self.spec.start
        self.steps = 0
        self.done = False
        return self.spec.encode(self.position)

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise ProtocolError("step() called on a finished episode; call reset()")
        self.position, reward, reached = gridworld_step(self.spec, self.position, action)
        self.steps += 1
        self.done = reached or self.steps >= self.spec.max_steps
        return self.spec.encode(self.position), reward, self.done

    def tables(self) -> TransitionTables:
        spec = self.spec
        n = spec.n_cells
        nxt = np.empty((n, len(ACTIONS)), dtype=np.int32)
        rew = np.zeros((n, len(ACTIONS)))
        term = np.zeros((n, len(ACTIONS)), dtype=np.uint8)
        for s in range(n):
            cell = spec.decode(s)
            for a in range(len(ACTIONS)):
                pos, r, reached = gridworld_step(spec, cell, a)
                nxt[s, a] = spec.encode(pos)
                rew[s, a] = r
                term[s, a] = reached
        return TransitionTables(nxt, rew, term, spec.encode(spec.start), spec.max_steps)


# ----------------------------------------------------------------------- Bandits


class _SingleStateBandit(Environment):
    n_percepts = 1

    def __init__(self, rewards):
        self.rewards = np.asarray(rewards, dtype=float)
        if not np.all(np.isfinite(self.rewards)) or np.any(self.rewards < 0):
            raise ValueError("bandit rewards must be finite and >= 0")
        self.n_actions = self.rewards.size
        self.done = True

    def reset(self) -> int:
        self.done = False
        return 0

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise ProtocolError("step() called on a finished episode; call reset()")
        if not 0 <= action < self.n_actions:
            raise IndexError(f"action {action} out of range")
        self.done = True
        return 0, float(self.rewards[action]), True

    def tables(self) -> TransitionTables:
        a = self.n_actions
        return TransitionTables(
            np.zeros((1, a), dtype=np.int32),
            self.rewards.reshape(1, a).copy(),
            np.ones((1, a), dtype=np.uint8),
            0,
            1,
        )


def bandit_step_flat(action: int, d: int, m: int, reward: float = 0.025) -> float:
    """Reward of ``action`` when output modes 1 and ``m`` (1-based) pay out."""
    if not 0 <= action < 1 << d:
        raise IndexError(f"action {action} out of range for d={d}")
    return reward if action in (0, m - 1) else 0.0


class FlatTwoArmBandit(_SingleStateBandit):
    """``2**d`` arms; the first mode and mode ``m`` (1-based) are rewarded."""

    def __init__(self, d: int, m: int, reward: float = 0.025):
        if d < 1:
            raise ValueError("d must be >= 1")
        if not 2 <= m <= 1 << d:
            raise ValueError(f"rewarded mode m must lie in [2, {1 << d}], got {m}")
        self.d, self.m = d, m
        super().__init__([bandit_step_flat(a, d, m, reward) for a in range(1 << d)])


def lambda_tables(x: float, epsilon: float = 0.004) -> list:
    """Sub-action reward tables for subspaces of size (2, 4, 2)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    l2 = np.array([0.0, x * x, 1.0, (1.0 - x) ** 2]) / (2.0 - 2.0 * x + 2.0 * x * x)
    return [epsilon * np.array([0.95, 0.05]), epsilon * l2, epsilon * np.array([0.05, 0.95])]


def bandit_step_factorized(sub_actions, tables, combine: str = "sum") -> float:
    if len(sub_actions) != len(tables):
        raise ValueError("one sub-action per subspace required")
    parts = []
    for a, table in zip(sub_actions, tables):
        if not 0 <= a < len(table):
            raise IndexError(f"sub-action {a} out of range for a subspace of size {len(table)}")
        parts.append(float(table[a]))
    if combine == "sum":
        return float(sum(parts))
    if combine == "product":
        return float(np.prod(parts))
    raise ValueError(f"unknown combination {combine!r}")


class FactorizedBandit(_SingleStateBandit):
    """Bandit over ``A_1 x ... x A_k``; output modes enumerate sub-actions with
    the first subspace most significant, so each subspace owns its own layers
    of the tree when all sizes are powers of two."""

    def __init__(self, tables, combine: str = "sum"):
        self.sub_tables = [np.asarray(t, dtype=float) for t in tables]
        self.sizes = tuple(len(t) for t in self.sub_tables)
        self.combine = combine
        rewards = [bandit_step_factorized(sub, self.sub_tables, combine) for sub in itertools.product(*(range(s) for s in self.sizes))]
        super().__init__(rewards)

    @classmethod
    def with_mixing(cls, x: float, epsilon: float = 0.004, combine: str = "sum") -> "FactorizedBandit":
        return cls(lambda_tables(x, epsilon), combine)

    def decompose(self, action: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(action, self.sizes))

    def compose(self, sub_actions) -> int:
        return int(np.ravel_multi_index(tuple(sub_actions), self.sizes))
