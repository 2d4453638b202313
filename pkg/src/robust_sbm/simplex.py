"""Dense two-phase simplex for small LPs in standard form.

    minimize  c @ x   subject to  A @ x = b,  x >= 0

Bland's rule is used for both entering and leaving variables, so the method
cannot cycle on degenerate problems.  Intended for a few dozen variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective: float


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T, basis, ncols, tol, max_iter):
    """Optimize tableau T whose last row holds reduced costs; columns >= ncols are barred."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :ncols]
        enter = next((j for j in range(ncols) if cost[j] < -tol), None)
        if enter is None:
            return "optimal"
        col = T[:m, enter]
        best, leave = None, None
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if best is None or ratio < best - tol or (abs(ratio - best) <= tol and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded"
        _pivot(T, leave, enter)
        basis[leave] = enter
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(c, A_eq, b_eq, tol=TOL, max_iter=10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).ravel()
    m, nv = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: artificial variables nv..nv+m-1
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv:nv + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    _run(T, basis, nv + m, tol, max_iter)
    if -T[-1, -1] > tol * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult("infeasible", np.full(nv, np.nan), np.nan)

    # drive remaining artificials out of the basis; drop redundant rows
    keep_rows = []
    for i in range(m):
        if basis[i] >= nv:
            j = next((j for j in range(nv) if abs(T[i, j]) > tol), None)
            if j is None:
                continue
            _pivot(T, i, j)
            basis[i] = j
        keep_rows.append(i)
    T = np.vstack([T[keep_rows][:, list(range(nv)) + [-1]], np.zeros((1, nv + 1))])
    basis = [basis[i] for i in keep_rows]

    # phase 2
    T[-1, :nv] = c
    for i, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[i]
    status = _run(T, basis, nv, tol, max_iter)
    x = np.zeros(nv)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    if status == "unbounded":
        return LPResult("unbounded", x, -np.inf)
    return LPResult("optimal", x, float(c @ x))
