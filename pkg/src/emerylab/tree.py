"""Finite filtered probability space on a rooted scenario tree.

Nodes are integers in breadth-first order, the root is node 0 at level 0,
and every leaf sits at the final level.  Information at level t is "which
node the path occupies", so adapted processes carry one value per node and
predictable processes are additionally constant across sibling groups.
Left limits follow the convention X_(0-) = 0, so the increment at the root
is the initial value itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LevelOutOfRange,
    NonPositiveProbability,
    PredictabilityViolation,
    ProbabilitySumViolation,
    RaggedDepth,
    UnknownNode,
)

PROB_TOL = 1e-12
SIBLING_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ScenarioTree:
    """Rooted tree with one-step branch probabilities.

    ``parent[i]`` is the parent node of i (-1 for the root), ``level[i]``
    its time level, and ``branch_prob[i]`` the conditional probability of
    moving from ``parent[i]`` to i (1.0 at the root).  Derived index
    structures are cached at construction; instances are immutable.
    """

    n_steps: int
    parent: np.ndarray
    level: np.ndarray
    branch_prob: np.ndarray
    children: tuple[np.ndarray, ...] = field(init=False, repr=False)
    level_nodes: tuple[np.ndarray, ...] = field(init=False, repr=False)
    leaves: np.ndarray = field(init=False, repr=False)
    internal: np.ndarray = field(init=False, repr=False)
    path_prob: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        parent = np.asarray(self.parent, dtype=np.int64)
        level = np.asarray(self.level, dtype=np.int64)
        prob = np.asarray(self.branch_prob, dtype=np.float64)
        n = parent.size
        if n == 0 or parent[0] != -1 or level[0] != 0:
            raise RaggedDepth("tree must have a single root with id 0 at level 0")
        if np.count_nonzero(parent == -1) != 1:
            raise RaggedDepth("exactly one root allowed")
        if self.n_steps < 1:
            raise RaggedDepth("horizon must be at least one step")
        if np.any(parent[1:] >= np.arange(1, n)) or np.any(parent[1:] < 0):
            raise RaggedDepth("parents must precede children in id order")
        if np.any(level[1:] != level[parent[1:]] + 1):
            raise RaggedDepth("child level must be parent level + 1")
        if np.any(prob[1:] <= 0.0):
            raise NonPositiveProbability("branch probabilities must be strictly positive")

        kids: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            kids[parent[i]].append(i)
        children = tuple(_readonly(np.asarray(k, dtype=np.int64)) for k in kids)

        has_kids = np.array([len(k) > 0 for k in kids])
        if np.any(level[~has_kids] != self.n_steps):
            raise RaggedDepth("every leaf must sit at the final level")
        if np.any(level > self.n_steps):
            raise RaggedDepth("node level exceeds the horizon")
        for i in np.flatnonzero(has_kids):
            s = prob[children[i]].sum()
            if abs(s - 1.0) > PROB_TOL:
                raise ProbabilitySumViolation(
                    f"children of node {i} have branch probabilities summing to {s!r}"
                )

        level_nodes = tuple(
            _readonly(np.flatnonzero(level == t)) for t in range(self.n_steps + 1)
        )
        path_prob = np.empty(n, dtype=np.float64)
        path_prob[0] = 1.0
        for i in range(1, n):
            path_prob[i] = path_prob[parent[i]] * prob[i]

        object.__setattr__(self, "parent", _readonly(parent))
        object.__setattr__(self, "level", _readonly(level))
        object.__setattr__(self, "branch_prob", _readonly(prob))
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "level_nodes", level_nodes)
        object.__setattr__(self, "leaves", _readonly(np.flatnonzero(~has_kids)))
        object.__setattr__(self, "internal", _readonly(np.flatnonzero(has_kids)))
        object.__setattr__(self, "path_prob", _readonly(path_prob))

    @property
    def n_nodes(self) -> int:
        return self.parent.size

    def check_node(self, node: int) -> int:
        node = int(node)
        if not 0 <= node < self.n_nodes:
            raise UnknownNode(f"node {node} not in tree of size {self.n_nodes}")
        return node

    def ancestor_at_level(self, s: int) -> np.ndarray:
        """For every node, its (weak) ancestor at level s; -1 above level s."""
        if not 0 <= s <= self.n_steps:
            raise LevelOutOfRange(f"level {s} outside 0..{self.n_steps}")
        anc = np.full(self.n_nodes, -1, dtype=np.int64)
        at = self.level_nodes[s]
        anc[at] = at
        for t in range(s + 1, self.n_steps + 1):
            nodes = self.level_nodes[t]
            anc[nodes] = anc[self.parent[nodes]]
        return anc

    def physical_measure(self) -> "Measure":
        return Measure(self, self.path_prob[self.leaves])


def build_tree(spec) -> ScenarioTree:
    """Build and validate a tree from a node-list description.

    Accepts either the document form ``{"steps": N, "nodes": [...]}`` or a
    bare node list; each node is ``{"id", "parent", "prob"}`` with ids
    0..n-1 in listing order, parents before children, and no "prob" on the
    root.  Ids come out breadth-first whenever levels are listed in order.
    """
    if isinstance(spec, Mapping):
        steps = spec["steps"]
        nodes = spec["nodes"]
    else:
        nodes = list(spec)
        steps = None
    n = len(nodes)
    parent = np.empty(n, dtype=np.int64)
    prob = np.ones(n, dtype=np.float64)
    level = np.zeros(n, dtype=np.int64)
    for i, nd in enumerate(nodes):
        if int(nd["id"]) != i:
            raise RaggedDepth(f"node ids must be 0..{n - 1} in listing order")
        p = nd.get("parent")
        parent[i] = -1 if p is None else int(p)
        if parent[i] >= 0:
            if nd.get("prob") is None:
                raise NonPositiveProbability(f"node {i} is missing its branch probability")
            prob[i] = float(nd["prob"])
            level[i] = level[parent[i]] + 1 if 0 <= parent[i] < i else 0
    if steps is None:
        steps = int(level.max()) if n else 0
    return ScenarioTree(int(steps), parent, level, prob)


def uniform_tree(steps: int, branch_probs: Sequence[float]) -> ScenarioTree:
    """Tree with the same branching (and branch probabilities) at every node."""
    probs = [float(p) for p in branch_probs]
    nodes = [{"id": 0, "parent": None}]
    frontier = [0]
    for _ in range(steps):
        nxt = []
        for node in frontier:
            for p in probs:
                nodes.append({"id": len(nodes), "parent": node, "prob": p})
                nxt.append(len(nodes) - 1)
        frontier = nxt
    return build_tree({"steps": steps, "nodes": nodes})


def binomial_tree(steps: int, p_up: float = 0.5) -> ScenarioTree:
    return uniform_tree(steps, (p_up, 1.0 - p_up))


def node_probability(tree: ScenarioTree, node: int) -> float:
    """Probability of the path from the root to ``node`` under the tree's own measure."""
    return float(tree.path_prob[tree.check_node(node)])


@dataclass(frozen=True)
class Measure:
    """Equivalent probability measure given by strictly positive leaf weights."""

    tree: ScenarioTree
    leaf_weights: np.ndarray
    node_mass: np.ndarray = field(init=False, repr=False)
    branch_weight: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.leaf_weights, dtype=np.float64)
        tree = self.tree
        if w.shape != tree.leaves.shape:
            raise ProbabilitySumViolation("one weight per leaf required")
        if np.any(w <= 0.0):
            raise NonPositiveProbability("measure weights must be strictly positive")
        if abs(w.sum() - 1.0) > PROB_TOL:
            raise ProbabilitySumViolation(f"leaf weights sum to {w.sum()!r}")
        mass = np.zeros(tree.n_nodes, dtype=np.float64)
        mass[tree.leaves] = w
        for t in range(tree.n_steps, 0, -1):
            nodes = tree.level_nodes[t]
            np.add.at(mass, tree.parent[nodes], mass[nodes])
        q = np.ones(tree.n_nodes, dtype=np.float64)
        q[1:] = mass[1:] / mass[tree.parent[1:]]
        object.__setattr__(self, "leaf_weights", _readonly(w))
        object.__setattr__(self, "node_mass", _readonly(mass))
        object.__setattr__(self, "branch_weight", _readonly(q))

    @classmethod
    def from_leaf_dict(cls, tree: ScenarioTree, weights: Mapping[int, float]) -> "Measure":
        w = np.empty(tree.leaves.size, dtype=np.float64)
        for k, leaf in enumerate(tree.leaves):
            if int(leaf) not in weights:
                raise UnknownNode(f"measure missing weight for leaf {leaf}")
            w[k] = float(weights[int(leaf)])
        if len(weights) != tree.leaves.size:
            extra = set(int(k) for k in weights) - set(int(v) for v in tree.leaves)
            raise UnknownNode(f"measure assigns weight to non-leaf nodes {sorted(extra)}")
        return cls(tree, w)

    def expectation(self, leaf_values: np.ndarray) -> float:
        return float(np.dot(self.leaf_weights, leaf_values))


@dataclass(frozen=True)
class AdaptedProcess:
    """One value per node."""

    tree: ScenarioTree
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.tree.n_nodes,):
            raise UnknownNode(
                f"process needs {self.tree.n_nodes} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def constant(cls, tree: ScenarioTree, c: float) -> "AdaptedProcess":
        return cls(tree, np.full(tree.n_nodes, float(c)))

    @classmethod
    def from_dict(cls, tree: ScenarioTree, values: Mapping, name: str = "process") -> "AdaptedProcess":
        v = np.empty(tree.n_nodes, dtype=np.float64)
        seen = 0
        for key, val in values.items():
            node = int(key)
            tree.check_node(node)
            v[node] = float(val)
            seen += 1
        if seen != tree.n_nodes:
            raise UnknownNode(f"{name}: expected {tree.n_nodes} node values, got {seen}")
        return cls(tree, v)

    def terminal(self) -> np.ndarray:
        return self.values[self.tree.leaves]

    def initial(self) -> float:
        return float(self.values[0])

    def left_limit(self) -> np.ndarray:
        """Parent values, with 0 at the root."""
        out = np.empty(self.tree.n_nodes)
        out[0] = 0.0
        out[1:] = self.values[self.tree.parent[1:]]
        return out

    def increments(self) -> np.ndarray:
        return self.values - self.left_limit()

    def _binop(self, other, op) -> "AdaptedProcess":
        if isinstance(other, AdaptedProcess):
            if other.tree is not self.tree:
                raise UnknownNode("processes live on different trees")
            return AdaptedProcess(self.tree, op(self.values, other.values))
        return AdaptedProcess(self.tree, op(self.values, float(other)))

    def __add__(self, other):
        return self._binop(other, np.add)

    def __radd__(self, other):
        return self._binop(other, np.add)

    def __sub__(self, other):
        return self._binop(other, np.subtract)

    def __rsub__(self, other):
        return AdaptedProcess(self.tree, float(other) - self.values)

    def __mul__(self, other):
        return self._binop(other, np.multiply)

    def __rmul__(self, other):
        return self._binop(other, np.multiply)

    def __truediv__(self, other):
        return self._binop(other, np.divide)

    def __neg__(self):
        return AdaptedProcess(self.tree, -self.values)

    def __abs__(self):
        return AdaptedProcess(self.tree, np.abs(self.values))


def sibling_spread(tree: ScenarioTree, values: np.ndarray) -> float:
    """Largest within-sibling-group spread; 0 means exactly one-step predictable."""
    worst = 0.0
    for node in tree.internal:
        kids = tree.children[node]
        v = values[kids]
        worst = max(worst, float(v.max() - v.min()))
    return worst


class PredictableProcess(AdaptedProcess):
    """Adapted process whose value at each node is known one step earlier.

    Encoded as sibling equality: all children of a node share one value.
    The root value plays the role of the initial integrand weight.
    """

    def __post_init__(self) -> None:
        super().__post_init__()
        spread = sibling_spread(self.tree, self.values)
        if spread > SIBLING_TOL:
            raise PredictabilityViolation(
                f"sibling values differ by {spread:.3e} (> {SIBLING_TOL})"
            )

    @classmethod
    def from_step_values(
        cls, tree: ScenarioTree, root_value: float, step_values: Mapping[int, float]
    ) -> "PredictableProcess":
        """Build from the root weight plus one value per internal node's children."""
        v = np.empty(tree.n_nodes)
        v[0] = float(root_value)
        for node in tree.internal:
            v[tree.children[node]] = float(step_values[int(node)])
        return cls(tree, v)


def require_predictable(eta: AdaptedProcess) -> None:
    spread = sibling_spread(eta.tree, eta.values)
    if spread > SIBLING_TOL:
        raise PredictabilityViolation(
            f"integrand is not predictable: sibling spread {spread:.3e}"
        )


def conditional_expectation(
    tree: ScenarioTree, Q: Measure, X: AdaptedProcess, t: int
) -> np.ndarray:
    """E_Q[X at level t+1 | node] for every node at level t.

    Returns values aligned with ``tree.level_nodes[t]``.
    """
    if not 0 <= t < tree.n_steps:
        raise LevelOutOfRange(f"level {t} has no successor level in 0..{tree.n_steps}")
    out = np.zeros(tree.n_nodes)
    nxt = tree.level_nodes[t + 1]
    np.add.at(out, tree.parent[nxt], Q.branch_weight[nxt] * X.values[nxt])
    return out[tree.level_nodes[t]]


def one_step_expectations(tree: ScenarioTree, Q: Measure, values: np.ndarray) -> np.ndarray:
    """E_Q[next-level values | node] for every internal node, aligned with ``tree.internal``."""
    acc = np.zeros(tree.n_nodes)
    np.add.at(acc, tree.parent[1:], Q.branch_weight[1:] * values[1:])
    return acc[tree.internal]
