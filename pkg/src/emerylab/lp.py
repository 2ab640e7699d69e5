"""Small dense linear programming kernel.

Node-level feasibility and polar-value problems here have at most a few
dozen variables, so a plain two-phase tableau simplex with Bland's rule is
plenty: deterministic, cycle-free, and with no solver dependency.  All
tolerances default to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LP_TOL = 1e-9
_PIVOT_TOL = 1e-11
_MAX_PIVOTS = 20_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray
    value: float


def _phase(T: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray) -> str:
    """Minimize cost over the tableau in place. Bland's rule throughout."""
    m = T.shape[0]
    for _ in range(_MAX_PIVOTS):
        cb = cost[basis]
        reduced = cost - cb @ T[:, :-1]
        enter = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] < -LP_TOL:
                enter = int(j)
                break
        if enter < 0:
            return OPTIMAL
        col = T[:, enter]
        rows = np.flatnonzero(col > _PIVOT_TOL)
        if rows.size == 0:
            return UNBOUNDED
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + _PIVOT_TOL]
        leave = int(tied[np.argmin([basis[r] for r in tied])])
        piv = T[leave, enter]
        T[leave] /= piv
        for r in range(m):
            if r != leave and abs(T[r, enter]) > 0.0:
                T[r] -= T[r, enter] * T[leave]
        basis[leave] = enter
    raise RuntimeError("simplex did not terminate")


def solve_lp(
    c: np.ndarray | None,
    A_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    maximize: bool = True,
    tol: float = LP_TOL,
) -> LPResult:
    """Optimize c'x over x >= 0 subject to A_ub x <= b_ub and A_eq x = b_eq.

    Pass c=None for a pure feasibility problem.
    """
    blocks_A = []
    blocks_b = []
    if A_ub is not None and len(A_ub):
        blocks_A.append(np.asarray(A_ub, dtype=np.float64))
        blocks_b.append(np.asarray(b_ub, dtype=np.float64))
    if A_eq is not None and len(A_eq):
        blocks_A.append(np.asarray(A_eq, dtype=np.float64))
        blocks_b.append(np.asarray(b_eq, dtype=np.float64))
    if not blocks_A:
        n = 0 if c is None else len(c)
        x = np.zeros(n)
        return LPResult(OPTIMAL, x, 0.0 if c is None else float(np.dot(c, x)))
    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)
    m, n = A.shape
    n_ub = 0 if A_ub is None else (len(A_ub) if len(A_ub) else 0)

    # flip rows so every right-hand side is nonnegative
    neg = b < 0
    A = A.copy()
    A[neg] *= -1.0
    b = b.copy()
    b[neg] *= -1.0

    # slack for <= rows (coefficient -1 after a flip), artificial wherever the
    # natural basic variable is missing
    n_slack = n_ub
    cols = n + n_slack
    rows_need_art = []
    slack_sign = np.ones(n_ub)
    slack_sign[neg[:n_ub]] = -1.0
    for i in range(m):
        if i < n_ub and slack_sign[i] > 0:
            continue
        rows_need_art.append(i)
    n_art = len(rows_need_art)
    T = np.zeros((m, cols + n_art + 1))
    T[:, :n] = A
    for i in range(n_ub):
        T[i, n + i] = slack_sign[i]
    basis = [-1] * m
    for i in range(n_ub):
        if slack_sign[i] > 0:
            basis[i] = n + i
    for k, i in enumerate(rows_need_art):
        T[i, cols + k] = 1.0
        basis[i] = cols + k
    T[:, -1] = b

    total = cols + n_art
    if n_art:
        cost1 = np.zeros(total)
        cost1[cols:] = 1.0
        allowed = np.ones(total, dtype=bool)
        status = _phase(T, basis, cost1, allowed)
        if status != OPTIMAL:
            return LPResult(INFEASIBLE, np.zeros(n), np.nan)
        resid = float(cost1[basis] @ T[:, -1])
        if resid > tol:
            return LPResult(INFEASIBLE, np.zeros(n), np.nan)
        # pivot leftover artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= cols:
                pivots = np.flatnonzero(np.abs(T[r, :cols]) > _PIVOT_TOL)
                if pivots.size:
                    j = int(pivots[0])
                    piv = T[r, j]
                    T[r] /= piv
                    for rr in range(m):
                        if rr != r and abs(T[rr, j]) > 0.0:
                            T[rr] -= T[rr, j] * T[r]
                    basis[r] = j

    if c is None:
        x = np.zeros(n)
        for r, bcol in enumerate(basis):
            if 0 <= bcol < n:
                x[bcol] = T[r, -1]
        return LPResult(OPTIMAL, x, 0.0)

    cost2 = np.zeros(total)
    cost2[:n] = -np.asarray(c, dtype=np.float64) if maximize else np.asarray(c, dtype=np.float64)
    allowed = np.ones(total, dtype=bool)
    allowed[cols:] = False
    status = _phase(T, basis, cost2, allowed)
    x = np.zeros(n)
    for r, bcol in enumerate(basis):
        if 0 <= bcol < n:
            x[bcol] = T[r, -1]
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, x, np.inf if maximize else -np.inf)
    return LPResult(OPTIMAL, x, float(np.dot(np.asarray(c, dtype=np.float64), x)))


def convex_combination_weights(
    points: np.ndarray, target: np.ndarray, tol: float = LP_TOL
) -> np.ndarray | None:
    """Weights putting ``target`` in the convex hull of ``points`` (rows).

    Returns None when infeasible at tolerance ``tol``.  Among feasible
    weight vectors the lexicographically smallest is returned, which keeps
    certificates deterministic; when the weights are unique this is just
    the solution of the linear system.
    """
    P = np.asarray(points, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    k, m = P.shape
    scale = 1.0 + float(np.max(np.abs(P))) + float(np.max(np.abs(y)))
    M = np.vstack([P.T, np.ones((1, k))])
    rhs = np.concatenate([y, [1.0]])

    if k <= m + 1:
        w, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
        if rank == k and w.min() >= -tol:
            w = np.maximum(w, 0.0)
            s = w.sum()
            if s > 0:
                w = w / s
            if np.max(np.abs(P.T @ w - y)) <= tol * scale:
                return w

    res = solve_lp(None, A_eq=M, b_eq=rhs, tol=tol * scale)
    if res.status != OPTIMAL:
        return None
    w = res.x
    # lexicographic refinement: push early coordinates down one at a time
    eqs_A = [M]
    eqs_b = [rhs]
    unit = np.zeros(k)
    for i in range(k - 1):
        c = np.zeros(k)
        c[i] = 1.0
        out = solve_lp(
            c,
            A_eq=np.vstack(eqs_A),
            b_eq=np.concatenate(eqs_b),
            maximize=False,
            tol=tol * scale,
        )
        if out.status != OPTIMAL:
            break
        w = out.x
        unit = np.zeros(k)
        unit[i] = 1.0
        eqs_A.append(unit[None, :])
        eqs_b.append(np.array([w[i]]))
    w = np.maximum(w, 0.0)
    s = w.sum()
    if s > 0:
        w = w / s
    if np.max(np.abs(P.T @ w - y)) > tol * scale:
        return None
    return w


def one_step_arbitrage(returns: np.ndarray, tol: float = LP_TOL) -> np.ndarray | None:
    """Portfolio direction with nonnegative profit on all branches, positive total.

    ``returns`` has one row per child and one column per asset.  Returns the
    direction (normalized so total profit is 1) or None when no such
    direction exists.
    """
    R = np.asarray(returns, dtype=np.float64)
    m, k = R.shape
    if k == 0:
        return None
    # theta free, split into positive and negative parts
    A_ub = np.hstack([-R, R])
    b_ub = np.zeros(m)
    A_eq = np.hstack([R.sum(axis=0), -R.sum(axis=0)])[None, :]
    b_eq = np.array([1.0])
    res = solve_lp(None, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, tol=tol)
    if res.status != OPTIMAL:
        return None
    theta = res.x[:k] - res.x[k:]
    profit = R @ theta
    if profit.min() < -tol or profit.sum() <= tol:
        return None
    return theta
