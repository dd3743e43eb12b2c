"""Binary beamsplitter trees: topology, phases, programming, noise and sampling.

Nodes are addressed by ``(k, l)`` with layer ``k`` in ``[1, n]`` and position
``l`` in ``[1, 2**(k-1)]``.  Internally every per-node array is stored in heap
order: the root is index 0 and node ``j`` has upper child ``2j + 1`` and lower
child ``2j + 2``.  Leaves (output modes) are 0-based; the upper branch always
leads towards the lower-numbered leaves.

Scalar ``math`` functions are used on purpose in the per-node loops so the
results are bit-identical to the compiled kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

HALF_PI = math.pi / 2
QUARTER_PI = math.pi / 4

# Hard cap on photon re-injections after hitting an unassigned output mode.
MAX_REINJECTIONS = 64

NOISE_MODES = ("per-adjustment", "per-shot")
NOISE_TARGETS = ("theta", "mzi")


class SamplingError(RuntimeError):
    """Raised when a photon keeps landing on unassigned output modes."""


@dataclass(frozen=True)
class TreeTopology:
    depth: int

    def __post_init__(self):
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 1:
            raise ValueError(f"depth must be a positive integer, got {self.depth!r}")

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def n_nodes(self) -> int:
        return (1 << self.depth) - 1

    @classmethod
    def for_actions(cls, n_actions: int) -> "TreeTopology":
        """Smallest tree with at least ``n_actions`` leaves (depth >= 1)."""
        if n_actions < 1:
            raise ValueError("need at least one action")
        return cls(max(1, math.ceil(math.log2(n_actions))))

    def check_node(self, k: int, l: int) -> None:
        if not (1 <= k <= self.depth) or not (1 <= l <= 1 << (k - 1)):
            raise IndexError(f"node ({k}, {l}) outside a depth-{self.depth} tree")

    def index(self, k: int, l: int) -> int:
        """Heap index of node ``(k, l)``."""
        self.check_node(k, l)
        return (1 << (k - 1)) - 1 + (l - 1)

    def node(self, index: int) -> tuple[int, int]:
        """Inverse of :meth:`index`."""
        if not 0 <= index < self.n_nodes:
            raise IndexError(f"node index {index} out of range")
        k = (index + 1).bit_length()
        return k, index - ((1 << (k - 1)) - 1) + 1

    def nodes(self):
        for j in range(self.n_nodes):
            yield self.node(j)

    def path(self, leaf: int) -> list[tuple[int, int]]:
        """Root-to-leaf path as ``(heap index, branch)`` pairs, branch 0 = upper."""
        if not 0 <= leaf < self.n_leaves:
            raise IndexError(f"leaf {leaf} out of range for depth {self.depth}")
        out = []
        node = 0
        for k in range(self.depth):
            bit = (leaf >> (self.depth - 1 - k)) & 1
            out.append((node, bit))
            node = 2 * node + 1 + bit
        return out

    def subtree_leaves(self, index: int) -> range:
        k, l = self.node(index)
        up, down = leaf_intervals(k, l, self.depth)
        return range(up.start, down.stop)


def leaf_intervals(k: int, l: int, n: int) -> tuple[range, range]:
    """Leaves reached through the upper and the lower branch of node ``(k, l)``.

    Returned as ranges of 0-based leaf indices, so the 1-based interval
    ``[1 + (2l-2) 2^(n-k), (2l-1) 2^(n-k)]`` becomes
    ``range((2l-2) 2^(n-k), (2l-1) 2^(n-k))``.
    """
    if n < 1 or not (1 <= k <= n) or not (1 <= l <= 1 << (k - 1)):
        raise IndexError(f"node ({k}, {l}) outside a depth-{n} tree")
    w = 1 << (n - k)
    return range((2 * l - 2) * w, (2 * l - 1) * w), range((2 * l - 1) * w, 2 * l * w)


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian phase noise.

    ``mode`` selects when a fresh draw happens: every time a phase is written
    (``per-adjustment``) or on every photon (``per-shot``).  With
    ``target="mzi"`` the noise hits the internal Mach-Zehnder phase ``2*theta``
    instead of the beamsplitter angle, halving its effect on ``theta``.
    """

    sigma: float = 0.0
    mode: str = "per-adjustment"
    target: str = "theta"

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"noise sigma must be finite and >= 0, got {self.sigma}")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.target not in NOISE_TARGETS:
            raise ValueError(f"unknown noise target {self.target!r}")

    @property
    def theta_sigma(self) -> float:
        """Standard deviation of the induced error on ``theta``."""
        return self.sigma / 2 if self.target == "mzi" else self.sigma

    @property
    def per_shot(self) -> bool:
        return self.mode == "per-shot" and self.sigma > 0

    @property
    def per_adjustment(self) -> bool:
        return self.mode == "per-adjustment" and self.sigma > 0


IDEAL = NoiseSpec()


@dataclass
class PhaseTree:
    """Beamsplitter angles of one decision tree.

    ``override`` holds ``-1`` for free nodes, ``0`` for a node forced onto its
    upper branch and ``1`` for one forced onto its lower branch (same encoding
    as the branch bit).  ``valid`` marks leaves that are assigned to an action;
    ``None`` means all leaves are valid.
    """

    topology: TreeTopology
    theta: np.ndarray
    override: np.ndarray = field(default=None)
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.topology.n_nodes,):
            raise ValueError(f"expected {self.topology.n_nodes} angles, got shape {self.theta.shape}")
        if self.override is None:
            self.override = np.full(self.topology.n_nodes, -1, dtype=np.int8)
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)

    @classmethod
    def uniform(cls, depth: int) -> "PhaseTree":
        topo = TreeTopology(depth)
        return cls(topo, np.full(topo.n_nodes, QUARTER_PI))

    def upper_probability(self, index: int) -> float:
        forced = self.override[index]
        if forced >= 0:
            return 1.0 if forced == 0 else 0.0
        s = math.sin(self.theta[index])
        return s * s

    def is_valid(self, leaf: int) -> bool:
        return self.valid is None or bool(self.valid[leaf])


def branch_probability(p_upper: float, branch: int) -> float:
    # 1 - p rather than cos^2 so both branches sum to one exactly
    return p_upper if branch == 0 else 1.0 - p_upper


def leaf_probability(tree: PhaseTree, leaf: int) -> float:
    """Probability that a photon injected at the root exits at ``leaf``."""
    prob = 1.0
    for node, bit in tree.topology.path(leaf):
        prob *= branch_probability(tree.upper_probability(node), bit)
    return prob


def leaf_distribution(tree: PhaseTree) -> np.ndarray:
    """All leaf probabilities, computed top-down in heap order."""
    m = tree.topology.n_nodes
    reach = np.empty(2 * m + 1)
    reach[0] = 1.0
    for j in range(m):
        p = tree.upper_probability(j)
        reach[2 * j + 1] = reach[j] * p
        reach[2 * j + 2] = reach[j] * (1.0 - p)
    return reach[m:].copy()


def theta_from_ratio(upper: float, lower: float) -> float:
    if lower == 0.0:
        return HALF_PI if upper > 0.0 else QUARTER_PI
    return math.atan(math.sqrt(upper / lower))


def program_tree(q, valid=None) -> PhaseTree:
    """Phases reproducing the leaf distribution ``q`` exactly.

    Each node gets ``theta = arctan(sqrt(sum_upper / sum_lower))``.  A node
    whose whole subtree carries zero mass is set to ``pi/4``.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size < 2 or q.size & (q.size - 1):
        raise ValueError(f"distribution length must be a power of two >= 2, got {q.size}")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("distribution entries must be finite and non-negative")
    total = math.fsum(q)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"distribution must sum to 1 (got {total!r})")
    q = q / total
    topo = TreeTopology(q.size.bit_length() - 1)
    return PhaseTree(topo, program_angles(q.tolist()), valid=valid)


def program_angles(q: list) -> list:
    """Angles in heap order for a normalized leaf list (no validation)."""
    leaves = len(q)
    m = leaves - 1
    sums = [0.0] * (2 * leaves - 1)
    sums[m:] = q
    for j in range(m - 1, -1, -1):
        sums[j] = sums[2 * j + 1] + sums[2 * j + 2]
    return [theta_from_ratio(sums[2 * j + 1], sums[2 * j + 2]) for j in range(m)]


def theta_of_chi(chi: float) -> float:
    """Map a learned value onto a beamsplitter angle in ``(0, pi/2)``."""
    if not math.isfinite(chi):
        raise ValueError(f"chi must be finite, got {chi!r}")
    return QUARTER_PI * (1.0 + math.tanh(chi))


# atanh argument clamp; keeps chi finite for deterministic nodes
ATANH_LIMIT = 1.0 - 1e-12


def chi_of_theta(theta: float) -> float:
    """Inverse of :func:`theta_of_chi`, saturating near the ends of the range."""
    x = 4.0 * theta / math.pi - 1.0
    if x > ATANH_LIMIT:
        x = ATANH_LIMIT
    elif x < -ATANH_LIMIT:
        x = -ATANH_LIMIT
    return math.atanh(x)


_H = np.array([[1.0, -1.0], [1.0, 1.0]])


def mzi_unitary(phi: float) -> np.ndarray:
    """Transfer matrix of a Mach-Zehnder interferometer with internal phase ``phi``.

    The bar transmission ``|U[0, 0]|**2`` equals ``sin(phi / 2)**2``, so a
    beamsplitter angle ``theta`` is realized by ``phi = 2 * theta``.
    """
    if not math.isfinite(phi):
        raise ValueError(f"phase must be finite, got {phi!r}")
    inner = np.diag([1.0, np.exp(1j * phi)])
    return 0.5 * _H @ inner @ _H


def clamp_angle(theta: float) -> float:
    if theta < 0.0:
        return 0.0
    if theta > HALF_PI:
        return HALF_PI
    return theta


def perturb_phase(theta: float, noise: NoiseSpec, rng: np.random.Generator) -> float:
    """``theta`` plus one Gaussian draw, clamped to ``[0, pi/2]``.

    Consumes no randomness when the noise is off.
    """
    sigma = noise.theta_sigma
    if sigma == 0.0:
        return theta
    return clamp_angle(theta + sigma * rng.standard_normal())


def sample_leaf(tree: PhaseTree, noise: NoiseSpec, rng: np.random.Generator) -> int:
    """Send one photon through the tree and return the detected output mode.

    Per-shot noise perturbs every angle the photon meets; per-adjustment noise
    is assumed to be already baked into ``tree.theta``.  Unassigned leaves are
    handled by re-injecting the photon.
    """
    per_shot = noise.per_shot
    sigma = noise.theta_sigma
    depth = tree.topology.depth
    for _ in range(MAX_REINJECTIONS + 1):
        node = 0
        leaf = 0
        for _k in range(depth):
            forced = tree.override[node]
            if forced >= 0:
                bit = int(forced)
            else:
                th = tree.theta[node]
                if per_shot:
                    th = clamp_angle(th + sigma * rng.standard_normal())
                s = math.sin(th)
                bit = 0 if rng.random() < s * s else 1
            leaf = 2 * leaf + bit
            node = 2 * node + 1 + bit
        if tree.is_valid(leaf):
            return leaf
    raise SamplingError(f"photon hit unassigned modes {MAX_REINJECTIONS + 1} times in a row")
