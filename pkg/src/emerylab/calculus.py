"""Discrete stochastic calculus on scenario trees.

Integrals, covariations and suprema are pathwise recursions down the tree;
the compensator construction and the supermartingale test take one-step
conditional expectations under a supplied equivalent measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSupermartingale
from .tree import (
    AdaptedProcess,
    Measure,
    PredictableProcess,
    ScenarioTree,
    one_step_expectations,
    require_predictable,
)

SUPERMARTINGALE_TOL = 1e-10


def path_accumulate(tree: ScenarioTree, increments: np.ndarray, op=np.add) -> np.ndarray:
    """Fold ``increments`` along every root-to-node path with ``op``."""
    out = np.array(increments, dtype=np.float64)
    for t in range(1, tree.n_steps + 1):
        nodes = tree.level_nodes[t]
        out[nodes] = op(out[tree.parent[nodes]], out[nodes])
    return out


def stochastic_integral(eta: AdaptedProcess, X: AdaptedProcess) -> AdaptedProcess:
    """Integral of a predictable integrand against X.

    Starts at eta_0 * X_0 and adds eta * (one-step increment of X) along
    each path.  Raises PredictabilityViolation when siblings of the
    integrand disagree.
    """
    require_predictable(eta)
    inc = eta.values * X.increments()
    return AdaptedProcess(X.tree, path_accumulate(X.tree, inc))


def quadratic_covariation(X: AdaptedProcess, Y: AdaptedProcess) -> AdaptedProcess:
    """Sum of products of one-step increments; starts at X_0 * Y_0."""
    inc = X.increments() * Y.increments()
    return AdaptedProcess(X.tree, path_accumulate(X.tree, inc))


def total_variation(X: AdaptedProcess) -> AdaptedProcess:
    """Pathwise sum of absolute one-step increments; starts at |X_0|."""
    inc = np.abs(X.increments())
    return AdaptedProcess(X.tree, path_accumulate(X.tree, inc))


def running_sup(X: AdaptedProcess) -> AdaptedProcess:
    """Pathwise running maximum of |X|."""
    return AdaptedProcess(X.tree, path_accumulate(X.tree, np.abs(X.values), op=np.maximum))


@dataclass(frozen=True)
class SupermartingaleVerdict:
    holds: bool
    max_violation: float
    worst_node: int

    def __bool__(self) -> bool:
        return self.holds


def is_supermartingale(
    Z: AdaptedProcess, Q: Measure, tol: float = SUPERMARTINGALE_TOL
) -> SupermartingaleVerdict:
    """Check E_Q[Z_{t+1} | node] <= Z_node + tol at every internal node.

    The verdict carries the largest violation and the node where it occurs,
    so failures are re-checkable with a single conditional expectation.
    """
    tree = Z.tree
    exp_next = one_step_expectations(tree, Q, Z.values)
    gap = exp_next - Z.values[tree.internal]
    worst = int(np.argmax(gap))
    max_violation = float(max(gap[worst], 0.0))
    return SupermartingaleVerdict(
        holds=bool(gap[worst] <= tol),
        max_violation=max_violation,
        worst_node=int(tree.internal[worst]),
    )


@dataclass(frozen=True)
class DoobMeyerParts:
    """Z = Z_0 + (M - M_0) - B with M a martingale and B a predictable,
    nondecreasing compensator started at 0."""

    Z: AdaptedProcess
    M: AdaptedProcess
    B: PredictableProcess


def doob_meyer(Z: AdaptedProcess, Q: Measure, tol: float = SUPERMARTINGALE_TOL) -> DoobMeyerParts:
    """Compensator decomposition of a Q-supermartingale.

    The compensator increment over each sibling group is the expected
    one-step drop E_Q[-(Z_next - Z) | node]; negative values within ``tol``
    are clipped to zero, anything worse raises NotSupermartingale.
    """
    tree = Z.tree
    drop = Z.values[tree.internal] - one_step_expectations(tree, Q, Z.values)
    worst = float(drop.min()) if drop.size else 0.0
    if worst < -tol:
        node = int(tree.internal[int(np.argmin(drop))])
        raise NotSupermartingale(
            f"conditional expectation exceeds current value by {-worst:.3e} at node {node}"
        )
    db = np.zeros(tree.n_nodes)
    for node, d in zip(tree.internal, np.maximum(drop, 0.0)):
        db[tree.children[node]] = d
    B = PredictableProcess(tree, path_accumulate(tree, db))
    M = AdaptedProcess(tree, Z.values + B.values)
    return DoobMeyerParts(Z=Z, M=M, B=B)
