"""Seeded generators for desk-scale instances.

Everything here is deterministic given the supplied generator, so test
sweeps and command-line experiments reproduce bit for bit.  Float-exact
constructions (the unit-spread martingale family) guard their rounding so
the advertised bounds hold exactly in double precision.
"""

from __future__ import annotations

import numpy as np

from .tree import AdaptedProcess, Measure, ScenarioTree, binomial_tree, build_tree
from .wealthset import WealthSet

KELLY_UP = 2.0
KELLY_DOWN = 0.5


def kelly_market() -> tuple[ScenarioTree, WealthSet]:
    """One-step fair coin with a riskless account and a double-or-halve asset."""
    tree = binomial_tree(1, 0.5)
    riskless = AdaptedProcess.constant(tree, 1.0)
    risky = AdaptedProcess(tree, np.array([1.0, KELLY_UP, KELLY_DOWN]))
    return tree, WealthSet.hull([riskless, risky])


def random_tree(
    rng: np.random.Generator,
    max_depth: int = 4,
    max_branching: int = 3,
    min_prob: float = 0.05,
) -> ScenarioTree:
    depth = int(rng.integers(2, max_depth + 1))
    nodes = [{"id": 0, "parent": None}]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            b = int(rng.integers(2, max_branching + 1))
            raw = rng.dirichlet(np.full(b, 2.0))
            raw = np.maximum(raw, min_prob)
            raw = raw / raw.sum()
            for p in raw:
                nodes.append({"id": len(nodes), "parent": node, "prob": float(p)})
                nxt.append(len(nodes) - 1)
        frontier = nxt
    return build_tree({"steps": depth, "nodes": nodes})


def random_equivalent_measure(
    rng: np.random.Generator, tree: ScenarioTree, spread: float = 0.5
) -> Measure:
    w = tree.path_prob[tree.leaves] * np.exp(rng.normal(0.0, spread, tree.leaves.size))
    return Measure(tree, w / w.sum())


def random_positive_generator(
    rng: np.random.Generator, tree: ScenarioTree, vol: float = 0.35
) -> AdaptedProcess:
    """Unit-capital strictly positive process with lognormal one-step growth."""
    growth = np.exp(rng.normal(0.0, vol, tree.n_nodes))
    growth = np.clip(growth, 0.35, 2.8)
    values = np.ones(tree.n_nodes)
    for t in range(1, tree.n_steps + 1):
        nodes = tree.level_nodes[t]
        values[nodes] = values[tree.parent[nodes]] * growth[nodes]
    return AdaptedProcess(tree, values)


def random_hull_market(
    rng: np.random.Generator,
    max_depth: int = 4,
    max_branching: int = 3,
    max_generators: int = 3,
) -> tuple[ScenarioTree, WealthSet]:
    tree = random_tree(rng, max_depth, max_branching)
    n_gen = int(rng.integers(2, max_generators + 1))
    gens = [AdaptedProcess.constant(tree, 1.0)]
    gens += [random_positive_generator(rng, tree) for _ in range(n_gen - 1)]
    return tree, WealthSet.hull(gens)


def random_conic_market(
    rng: np.random.Generator,
    arbitrage: bool,
    max_depth: int = 3,
    n_assets: int = 1,
) -> tuple[ScenarioTree, WealthSet]:
    """Conic market, either clean or with one planted dominating node.

    Clean markets force every asset's one-step returns to straddle zero at
    every node; the planted variant makes one asset's returns uniformly
    positive at one internal node.
    """
    tree = random_tree(rng, max_depth=max_depth, max_branching=3)
    values = np.ones((n_assets, tree.n_nodes))
    for t in range(1, tree.n_steps + 1):
        nodes = tree.level_nodes[t]
        for a in range(n_assets):
            r = rng.uniform(-0.35, 0.35, nodes.size)
            values[a, nodes] = values[a, tree.parent[nodes]] * (1.0 + r)
    # straddle zero at every sibling group so no one-step direction dominates
    for node in tree.internal:
        kids = tree.children[node]
        for a in range(n_assets):
            g = values[a, kids] / values[a, node]
            lo, hi = float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3))
            g[int(np.argmin(g))] = 1.0 - lo
            g[int(np.argmax(g))] = 1.0 + hi
            values[a, kids] = values[a, node] * g
    if arbitrage:
        node = int(tree.internal[rng.integers(0, tree.internal.size)])
        kids = tree.children[node]
        lift = rng.uniform(0.05, 0.25, kids.size)
        values[0, kids] = values[0, node] * (1.0 + lift)
    prices = [AdaptedProcess(tree, values[a]) for a in range(n_assets)]
    return tree, WealthSet.conic(tree, prices)


def random_positive_martingale(
    rng: np.random.Generator,
    tree: ScenarioTree,
    Q: Measure,
    sigma: float = 0.5,
    start: float = 1.0,
) -> AdaptedProcess:
    """Backward-built martingale with lognormal leaves, recentered to ``start``."""
    values = np.zeros(tree.n_nodes)
    values[tree.leaves] = np.exp(rng.normal(0.0, sigma, tree.leaves.size))
    for t in range(tree.n_steps, 0, -1):
        nodes = tree.level_nodes[t]
        np.add.at(values, tree.parent[nodes], Q.branch_weight[nodes] * values[nodes])
    return AdaptedProcess(tree, values * (start / values[0]))


def random_supermartingale(
    rng: np.random.Generator,
    tree: ScenarioTree,
    Q: Measure,
    start_low: float = 0.3,
    sigma: float = 0.55,
) -> AdaptedProcess:
    """Nonnegative supermartingale started at or below 1.

    Product of a positive martingale and a predictable nonincreasing drain,
    so the supermartingale property is structural, not numerical.
    """
    z0 = float(rng.uniform(start_low, 1.0))
    M = random_positive_martingale(rng, tree, Q, sigma=sigma, start=z0)
    drain = np.ones(tree.n_nodes)
    for node in tree.internal:
        drain[tree.children[node]] = drain[node] * float(rng.uniform(0.7, 1.0))
    return AdaptedProcess(tree, M.values * drain)


def unit_spread_member(tree: ScenarioTree, n: int) -> AdaptedProcess:
    """One-step martingale with terminal values 1 +- 1/n, float-exact.

    The up leaf is nudged down one ulp when rounding would push the spread
    above 1/n; the down leaf is the exact complement 2 - up, which keeps
    the mean at exactly 1 and both deviations equal.
    """
    dev = 1.0 / n
    up = 1.0 + dev
    if up - 1.0 > dev:
        up = np.nextafter(up, 1.0)
    dn = 2.0 - up
    return AdaptedProcess(tree, np.array([1.0, up, dn]))


def shrinking_family(
    rng: np.random.Generator, tree: ScenarioTree, Q: Measure, n_values
) -> list[AdaptedProcess]:
    """Martingales 1 + (M - 1)/n with |M_T - 1| <= 0.95, so the terminal
    metric is bounded by 1/n for every member."""
    values = np.zeros(tree.n_nodes)
    values[tree.leaves] = rng.uniform(0.525, 1.475, tree.leaves.size)
    for t in range(tree.n_steps, 0, -1):
        nodes = tree.level_nodes[t]
        np.add.at(values, tree.parent[nodes], Q.branch_weight[nodes] * values[nodes])
    M = values - values[0] + 1.0
    out = []
    for n in n_values:
        out.append(AdaptedProcess(tree, 1.0 + (M - 1.0) / float(n)))
    return out


def random_process(
    rng: np.random.Generator, tree: ScenarioTree, scale: float = 0.5
) -> AdaptedProcess:
    """Centered adapted process for metric experiments."""
    return AdaptedProcess(tree, rng.normal(0.0, scale, tree.n_nodes))
