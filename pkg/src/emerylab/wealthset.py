"""Rebalancing-closed sets of nonnegative unit-capital wealth processes.

Two representations are supported.  A finite-hull set is generated by
strictly positive processes and stores, per node, the extreme points of the
convex hull of their one-step growth vectors; iterating the rebalancing
splice over all switch times and mixing weights produces exactly nodewise
convex mixing of growths, so membership, sampling and arbitrage questions
all reduce to per-node geometry.  A conic set instead allows unconstrained
positions over listed risky returns (growth 1 + position * return), which
is the representation where absence of unbounded riskless profit can
actually fail and be certified.

Every adapted process here is automatically a semimartingale in the
discrete sense (bounded variation plus martingale parts always exist on a
finite tree); sampled elements are asserted finite to keep that structural
fact visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AlphaOutOfRange,
    Na1Fails,
    NonPositiveSwitchTarget,
    UnknownNode,
    ValidationError,
    ZeroGeneratorValue,
)
from .lp import convex_combination_weights, one_step_arbitrage, solve_lp
from .tree import AdaptedProcess, ScenarioTree

POSITIVITY_TOL = 1e-12
HULL_KIND = "hull"
CONIC_KIND = "conic"
MEMBERSHIP_TOL = 1e-8


def _check_generator(X: AdaptedProcess, name: str) -> None:
    if abs(X.values[0] - 1.0) > POSITIVITY_TOL:
        raise ValidationError(f"generator {name} must start at 1, starts at {X.values[0]!r}")
    if X.values.min() < -POSITIVITY_TOL:
        raise ValidationError(f"generator {name} takes negative values")


def _require_strictly_positive(X: AdaptedProcess, name: str) -> None:
    if X.values.min() <= POSITIVITY_TOL:
        raise ZeroGeneratorValue(
            f"generator {name} hits zero; blend it with a strictly positive "
            f"generator before building a hull"
        )


def _dedupe_rows(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    keep: list[int] = []
    for i in range(points.shape[0]):
        if not any(np.max(np.abs(points[i] - points[j])) <= tol for j in keep):
            keep.append(i)
    return points[keep]


def _extreme_rows(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop rows lying in the convex hull of the remaining rows."""
    points = _dedupe_rows(points)
    alive = list(range(points.shape[0]))
    i = 0
    while i < len(alive):
        others = [j for j in alive if j != alive[i]]
        if others and convex_combination_weights(points[others], points[alive[i]], tol) is not None:
            alive.pop(i)
        else:
            i += 1
    return points[alive]


def growth_hull(
    generators: Sequence[AdaptedProcess], tol: float = 1e-9
) -> dict[int, np.ndarray]:
    """Per-node extreme one-step growth vectors of strictly positive generators.

    Entry ``node -> (k, m)`` array: k extreme growth vectors across the
    node's m children, redundant generators eliminated by linear programming.
    """
    if not generators:
        raise ValidationError("at least one generator required")
    tree = generators[0].tree
    for idx, g in enumerate(generators):
        _check_generator(g, f"#{idx}")
        _require_strictly_positive(g, f"#{idx}")
        if g.tree is not tree:
            raise UnknownNode("generators live on different trees")
    sets: dict[int, np.ndarray] = {}
    for node in tree.internal:
        kids = tree.children[node]
        pts = np.stack([g.values[kids] / g.values[node] for g in generators])
        sets[int(node)] = _extreme_rows(pts, tol)
    return sets


class WealthSet:
    """Fork-convex wealth-process set with cached per-node growth geometry."""

    def __init__(
        self,
        tree: ScenarioTree,
        kind: str,
        generators: Sequence[AdaptedProcess],
        risky: Sequence[AdaptedProcess] = (),
    ):
        if kind not in (HULL_KIND, CONIC_KIND):
            raise ValidationError(f"unknown wealth-set kind {kind!r}")
        self.tree = tree
        self.kind = kind
        self.generators = tuple(generators)
        self.risky = tuple(risky)
        self._growth_sets: dict[int, np.ndarray] | None = None
        self._returns: dict[int, np.ndarray] | None = None
        if kind == HULL_KIND:
            self._growth_sets = growth_hull(self.generators)
        else:
            for idx, s in enumerate(self.risky):
                if s.values.min() <= POSITIVITY_TOL:
                    raise ZeroGeneratorValue(f"risky price #{idx} must stay strictly positive")
            self._returns = {}
            for node in tree.internal:
                kids = tree.children[node]
                cols = [s.values[kids] / s.values[node] - 1.0 for s in self.risky]
                self._returns[int(node)] = (
                    np.stack(cols, axis=1) if cols else np.zeros((kids.size, 0))
                )

    @classmethod
    def hull(cls, generators: Sequence[AdaptedProcess]) -> "WealthSet":
        return cls(generators[0].tree, HULL_KIND, generators)

    @classmethod
    def conic(cls, tree: ScenarioTree, risky_prices: Sequence[AdaptedProcess]) -> "WealthSet":
        riskless = AdaptedProcess.constant(tree, 1.0)
        gens = [riskless] + [s / s.values[0] for s in risky_prices]
        return cls(tree, CONIC_KIND, gens, risky_prices)

    # -- geometry ---------------------------------------------------------

    def node_returns(self, node: int) -> np.ndarray:
        if self._returns is None:
            raise ValidationError("finite-hull sets carry growth sets, not returns")
        return self._returns[int(node)]

    def growth_vertices(self, node: int) -> np.ndarray:
        if self._growth_sets is None:
            self._growth_sets = self._conic_vertices()
        return self._growth_sets[int(node)]

    def _conic_vertices(self) -> dict[int, np.ndarray]:
        verdict = na1_check(self)
        if not verdict.holds:
            raise Na1Fails(
                f"conic set admits one-step arbitrage at node {verdict.node}; "
                f"its growth sets are unbounded"
            )
        sets: dict[int, np.ndarray] = {}
        for node in self.tree.internal:
            R = self._returns[int(node)]
            sets[int(node)] = _polytope_growths(R)
        return sets

    # -- sampling ---------------------------------------------------------

    def sample_process(self, rng: np.random.Generator) -> AdaptedProcess:
        """Random element via per-node Dirichlet mixing over extreme growths."""
        tree = self.tree
        values = np.ones(tree.n_nodes)
        for node in tree.internal:
            V = self.growth_vertices(int(node))
            w = rng.dirichlet(np.ones(V.shape[0])) if V.shape[0] > 1 else np.ones(1)
            g = w @ V
            values[tree.children[node]] = values[node] * g
        assert np.all(np.isfinite(values))
        return AdaptedProcess(tree, values)


def _polytope_growths(R: np.ndarray, feas_tol: float = 1e-9) -> np.ndarray:
    """Extreme growth vectors 1 + R theta of the nonnegative-wealth polytope.

    Only valid when the polytope is bounded modulo directions that do not
    move the growth vector, which is exactly the arbitrage-free case.
    """
    m, k = R.shape
    if k == 0:
        return np.ones((1, m))
    u, s, vt = np.linalg.svd(R, full_matrices=False)
    r = int(np.sum(s > 1e-12 * max(s[0], 1.0))) if s.size else 0
    if r == 0:
        return np.ones((1, m))
    Rt = R @ vt[:r].T
    verts: list[np.ndarray] = []
    for rows in combinations(range(m), r):
        sub = Rt[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        z = np.linalg.solve(sub, -np.ones(r))
        growth = 1.0 + Rt @ z
        if growth.min() >= -feas_tol:
            verts.append(np.maximum(growth, 0.0))
    if not verts:
        raise ZeroGeneratorValue("degenerate return polytope has no vertices")
    return _extreme_rows(np.stack(verts))


def fork_convex_combine(
    X: AdaptedProcess,
    X1: AdaptedProcess,
    X2: AdaptedProcess,
    s: int,
    alpha: Mapping[int, float] | Sequence[float],
) -> AdaptedProcess:
    """Rebalancing splice: ride X to level s, then split capital across X1, X2.

    ``alpha`` assigns each level-s node the fraction switched into X1; the
    remaining fraction goes into X2.  Both switch targets must be strictly
    positive.  From level s on, each subtree carries
    alpha * (X_s / X1_s) * X1 + (1 - alpha) * (X_s / X2_s) * X2.
    """
    tree = X.tree
    if X1.values.min() <= POSITIVITY_TOL or X2.values.min() <= POSITIVITY_TOL:
        raise NonPositiveSwitchTarget("switch targets must be strictly positive")
    nodes_s = tree.level_nodes[s]
    if isinstance(alpha, Mapping):
        a = np.array([float(alpha[int(n)]) for n in nodes_s])
    else:
        a = np.asarray(alpha, dtype=np.float64)
        if a.shape != nodes_s.shape:
            raise AlphaOutOfRange(f"need one alpha per level-{s} node")
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise AlphaOutOfRange("mixing fractions must lie in [0, 1]")

    anc = tree.ancestor_at_level(s)
    out = np.array(X.values)
    alpha_full = np.zeros(tree.n_nodes)
    alpha_full[nodes_s] = a
    below = anc >= 0
    a_n = alpha_full[anc[below]]
    ratio1 = X.values[anc[below]] / X1.values[anc[below]]
    ratio2 = X.values[anc[below]] / X2.values[anc[below]]
    out[below] = a_n * ratio1 * X1.values[below] + (1.0 - a_n) * ratio2 * X2.values[below]
    return AdaptedProcess(tree, out)


def blend(X: AdaptedProcess, chi: AdaptedProcess, lam: float) -> AdaptedProcess:
    """Affine mix (1 - lam) X + lam chi; the standard strict-positivity repair."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"blend weight must be interior to (0, 1), got {lam}")
    _require_strictly_positive(chi, "blend target")
    return AdaptedProcess(X.tree, (1.0 - lam) * X.values + lam * chi.values)


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    weights: dict[int, np.ndarray]
    worst_violation: float
    worst_node: int | None

    def __bool__(self) -> bool:
        return self.member


def _hull_distance(V: np.ndarray, y: np.ndarray) -> float:
    """Smallest sup-norm perturbation putting y into the hull of rows of V."""
    k, m = V.shape
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.vstack(
        [
            np.hstack([V.T, -np.ones((m, 1))]),
            np.hstack([-V.T, -np.ones((m, 1))]),
        ]
    )
    b_ub = np.concatenate([y, -y])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    res = solve_lp(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.array([1.0]), maximize=False)
    return float(res.value) if res.status == "optimal" else np.inf


def contains(W: WealthSet, X: AdaptedProcess, tol: float = MEMBERSHIP_TOL) -> MembershipResult:
    """Nodewise membership of X's growth vectors in the set's growth geometry.

    For each internal node an LP decides whether the one-step growth vector
    is a convex mix of the node's extreme growths; the mixing weights form
    the certificate (lexicographically smallest among feasible mixes).
    """
    tree = W.tree
    if abs(X.values[0] - 1.0) > 1e-9:
        raise ValidationError(f"membership is defined for unit initial capital, X_0={X.values[0]!r}")
    weights: dict[int, np.ndarray] = {}
    worst = 0.0
    worst_node = None
    scale = 1.0 + float(np.max(np.abs(X.values)))
    for node in tree.internal:
        kids = tree.children[node]
        xn = X.values[node]
        if xn <= POSITIVITY_TOL:
            bad = float(np.max(np.abs(X.values[kids])))
            if bad > tol * scale:
                return MembershipResult(False, weights, bad, int(node))
            continue
        y = X.values[kids] / xn
        V = W.growth_vertices(int(node))
        w = convex_combination_weights(V, y, tol)
        if w is None:
            dist = _hull_distance(V, y)
            if dist > worst:
                worst, worst_node = dist, int(node)
            if dist > tol:
                return MembershipResult(False, weights, float(dist), int(node))
            w = convex_combination_weights(V, y, max(tol, dist * 4.0 + 1e-12))
            if w is None:
                return MembershipResult(False, weights, float(dist), int(node))
        weights[int(node)] = w
    return MembershipResult(True, weights, worst, worst_node)


def sample_process(W: WealthSet, rng: np.random.Generator) -> AdaptedProcess:
    return W.sample_process(rng)


@dataclass(frozen=True)
class Na1Verdict:
    """Either a boundedness witness (per-level wealth bounds) or a planted
    arbitrage direction at a specific node."""

    holds: bool
    kind: str
    level_bounds: np.ndarray | None = None
    node: int | None = None
    direction: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.holds


def _level_bounds(W: WealthSet) -> np.ndarray:
    tree = W.tree
    m = np.ones(tree.n_nodes)
    for node in tree.internal:
        V = W.growth_vertices(int(node))
        kids = tree.children[node]
        m[kids] = m[node] * V.max(axis=0)
    bounds = np.empty(tree.n_steps + 1)
    for t in range(tree.n_steps + 1):
        bounds[t] = m[tree.level_nodes[t]].max()
    return np.maximum.accumulate(bounds)


def na1_check(W: WealthSet) -> Na1Verdict:
    """Decide absence of unbounded riskless profit.

    Finite-hull sets are uniformly bounded by growth products, hence always
    pass; the certificate is the per-level running bound.  Conic sets fail
    exactly when some node admits a position with nonnegative profit on all
    branches and positive profit on one, found by a per-node LP; scaling
    that position without bound manufactures profit from arbitrarily small
    capital, which is what the verdict's direction certifies.
    """
    if W.kind == CONIC_KIND:
        for node in W.tree.internal:
            theta = one_step_arbitrage(W.node_returns(int(node)))
            if theta is not None:
                return Na1Verdict(False, W.kind, node=int(node), direction=theta)
    return Na1Verdict(True, W.kind, level_bounds=_level_bounds(W))


def arbitrage_wealth_from_certificate(
    W: WealthSet, verdict: Na1Verdict, initial_capital: float
) -> tuple[AdaptedProcess, np.ndarray]:
    """Rebuild the profit the failure certificate promises.

    Starting from any capital x, ride the riskless account and apply the
    certified direction scaled by 1/x at the flagged node.  Returns the
    wealth process and the capital-independent payoff floor it dominates.
    """
    if verdict.holds or verdict.node is None or verdict.direction is None:
        raise ValidationError("certificate rebuild needs a failure verdict")
    tree = W.tree
    x = float(initial_capital)
    if x <= 0:
        raise ValidationError("initial capital must be positive")
    node = verdict.node
    R = W.node_returns(node)
    profit = R @ verdict.direction
    values = np.full(tree.n_nodes, x)
    kids = tree.children[node]
    values[kids] = x + profit
    level = int(tree.level[node]) + 1
    anc = tree.ancestor_at_level(level)
    for t in range(level + 1, tree.n_steps + 1):
        nodes = tree.level_nodes[t]
        values[nodes] = values[tree.parent[nodes]]
    floor = np.zeros(tree.leaves.size)
    under = anc[tree.leaves]
    for i, leaf_anc in enumerate(under):
        if leaf_anc in set(int(k) for k in kids):
            floor[i] = profit[list(kids).index(leaf_anc)]
    return AdaptedProcess(tree, values), floor
