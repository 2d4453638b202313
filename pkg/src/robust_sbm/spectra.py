"""Symmetric eigensolvers, inertia counts, projectors and nonbacktracking spectra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .errors import ConfigError, NoConvergence, SingularShift, TooLarge
from .graphmat import MOperator, NbMatrix, SparseGraph, SymMatrix, bethe_hessian, nb_matrix

DENSE_MAX = 2000
LDL_MAX = 6000
PIVOT_TOL = 1e-13


@dataclass
class EigResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residual_norms: np.ndarray
    converged: bool = True
    info: dict = field(default_factory=dict)


@dataclass
class Projector:
    basis: np.ndarray
    eigenvalues: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def trace(self) -> float:
        return float(self.rank)

    def diag(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.basis, self.basis)

    def apply(self, x):
        return self.basis @ (self.basis.T @ x)

    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T


# ---------------------------------------------------------------- operators


def _n_of(op) -> int:
    return op.n if hasattr(op, "n") else op.shape[0]


def _matvec(op):
    if isinstance(op, (SymMatrix, MOperator)):
        return op.matvec
    return lambda x: op @ x


def _is_explicit(op) -> bool:
    return isinstance(op, (SymMatrix, np.ndarray)) or sp.issparse(op)


def _dense(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    if sp.issparse(op):
        return op.toarray()
    return op.to_dense()


# ---------------------------------------------------------------- Lanczos


def _lanczos_run(mv, n, v0, locked, maxdim, tol_fn, check_every=5):
    """One Lanczos sweep with full reorthogonalization, stopping when the lowest Ritz pair converges.

    ``locked`` holds already-converged eigenvectors; the Krylov space is kept
    orthogonal to them.  Returns Ritz values/vectors/residuals (ascending).
    """
    maxdim = min(maxdim, n - locked.shape[1])
    Q = np.empty((n, maxdim))
    alpha = np.empty(maxdim)
    beta = np.empty(maxdim)

    def orth(w, upto):
        for _ in range(2):
            if locked.shape[1]:
                w -= locked @ (locked.T @ w)
            if upto:
                Qj = Q[:, :upto]
                w -= Qj @ (Qj.T @ w)
        return w

    q = orth(v0.copy(), 0)
    nq = np.linalg.norm(q)
    if nq == 0:
        raise NoConvergence("start vector lies in the locked subspace")
    q /= nq
    theta = S = res = None
    m = 0
    for j in range(maxdim):
        Q[:, j] = q
        w = mv(q)
        alpha[j] = q @ w
        w -= alpha[j] * q
        if j:
            w -= beta[j - 1] * Q[:, j - 1]
        w = orth(w, j + 1)
        b = np.linalg.norm(w)
        beta[j] = b
        m = j + 1
        last = m == maxdim
        breakdown = b <= 1e-14 * max(1.0, np.max(np.abs(alpha[:m])))
        if breakdown or last or (m >= 2 and m % check_every == 0):
            theta, S = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1]) if m > 1 else (
                alpha[:1].copy(), np.ones((1, 1)))
            res = np.abs(b * S[-1, :])
            if breakdown:
                res = np.zeros_like(res)
            if breakdown or last or res[0] <= tol_fn(theta):
                break
        q = w / b
    return theta, Q[:, :m] @ S, res


def lanczos_low(
    mv,
    n,
    *,
    count: Optional[int] = None,
    threshold: Optional[float] = None,
    tol: float = 1e-12,
    maxdim: int = 300,
    max_restarts: int = 60,
    confirm_runs: int = 2,
    seed=0,
) -> EigResult:
    """Lowest eigenpairs of a symmetric operator given as a matvec.

    Either the ``count`` lowest pairs or every pair strictly below ``threshold``.
    Converged pairs are locked and the iteration restarts from a fresh random
    vector in their orthogonal complement.  Convergence is judged on the
    absolute residual against ``tol`` times the largest Ritz magnitude seen,
    which copes with clusters at zero.

    Threshold mode stops after ``confirm_runs`` consecutive sweeps from
    independent random starts in which no Ritz value falls below the
    threshold.  Ritz values only ever overestimate the smallest eigenvalue, so
    this is a probabilistic certificate; isolated eigenvalues below the
    threshold show up within a few dozen steps.  Exact counts come from
    ``count_below``, which uses inertia when the matrix is explicit.
    """
    if (count is None) == (threshold is None):
        raise ConfigError("give exactly one of count or threshold")
    rng = np.random.default_rng(seed)
    locked = np.empty((n, 0))
    vals = []
    resids = []
    normest = [0.0]

    def tol_fn(theta):
        normest[0] = max(normest[0], float(np.max(np.abs(theta))))
        return tol * max(normest[0], 1e-300)

    start = rng.standard_normal(n)
    restarts = 0
    clean = 0
    while True:
        if locked.shape[1] >= n:
            break
        if count is not None and len(vals) >= count:
            break
        theta, Y, res = _lanczos_run(mv, n, start, locked, maxdim, tol_fn)
        ok = res <= tol_fn(theta)
        take = []
        for i in range(theta.size):
            if not ok[i]:
                break
            if threshold is not None and theta[i] >= threshold:
                break
            if count is not None and len(vals) + len(take) >= count:
                break
            take.append(i)
        if take:
            V = Y[:, take]
            V -= locked @ (locked.T @ V)
            V, _ = np.linalg.qr(V)
            locked = np.column_stack([locked, V])
            vals.extend(theta[take].tolist())
            resids.extend(res[take].tolist())
            start = rng.standard_normal(n)
            restarts = 0
            clean = 0
            continue
        if threshold is not None and theta[0] >= threshold:
            clean += 1
            if clean >= confirm_runs:
                break
            start = rng.standard_normal(n)
            continue
        clean = 0
        restarts += 1
        if restarts > max_restarts:
            order = np.argsort(vals)
            partial = EigResult(np.array(vals)[order], locked[:, order], np.array(resids)[order], False)
            raise NoConvergence("Lanczos did not converge", partial)
        # explicit restart from the best current approximation, nudged
        start = Y[:, 0] + 1e-3 * rng.standard_normal(n) / np.sqrt(n)
    vals = np.array(vals)
    order = np.argsort(vals)
    # Rayleigh-Ritz on the locked block cleans up residual coupling between locked vectors
    if locked.shape[1]:
        V = locked[:, order]
        MV = np.column_stack([mv(V[:, i]) for i in range(V.shape[1])])
        w, Z = np.linalg.eigh((V.T @ MV + MV.T @ V) / 2)
        V = V @ Z
        MV = MV @ Z
        resid = np.linalg.norm(MV - V * w, axis=0)
        return EigResult(w, V, resid, True, {"normest": normest[0]})
    return EigResult(np.empty(0), np.empty((n, 0)), np.empty(0), True, {"normest": normest[0]})


# ---------------------------------------------------------------- public API


def eig_extreme(op, side="low", count=None, threshold=None, tol=1e-12, method="auto", seed=0,
                maxdim=300) -> EigResult:
    """Extreme eigenpairs: the ``count`` lowest/highest, or all beyond ``threshold``."""
    if side not in ("low", "high"):
        raise ConfigError("side must be 'low' or 'high'")
    n = _n_of(op)
    sign = 1.0 if side == "low" else -1.0
    if method == "auto":
        method = "dense" if (n <= DENSE_MAX and (_is_explicit(op) or n <= 500)) else "lanczos"
    if method == "dense":
        w, V = np.linalg.eigh(_dense(op))
        if side == "high":
            w, V = w[::-1], V[:, ::-1]
        if count is not None:
            sel = np.arange(min(count, n))
        else:
            sel = np.flatnonzero(sign * w < sign * threshold)
        w, V = w[sel], V[:, sel]
        M = _dense(op)
        res = np.linalg.norm(M @ V - V * w, axis=0)
        return EigResult(w, V, res, True)
    mv = _matvec(op)
    f = (lambda x: mv(x)) if sign > 0 else (lambda x: -mv(x))
    thr = None if threshold is None else sign * threshold
    r = lanczos_low(f, n, count=count, threshold=thr, tol=tol, seed=seed, maxdim=maxdim)
    if sign < 0:
        r.eigenvalues = -r.eigenvalues
    return r


def ldl_inertia(M: np.ndarray, shift: float):
    """(negatives, zeros-ish, min |pivot eigenvalue|) of M - shift I via Bunch-Kaufman."""
    A = M - shift * np.eye(M.shape[0])
    _, D, _ = sla.ldl(A, lower=True, hermitian=True, overwrite_a=True, check_finite=False)
    off = np.diag(D, -1)
    neg = 0
    smallest = np.inf
    i = 0
    n = D.shape[0]
    while i < n:
        if i + 1 < n and off[i] != 0.0:
            ev = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            i += 2
        else:
            ev = np.array([D[i, i]])
            i += 1
        neg += int(np.sum(ev < 0))
        smallest = min(smallest, float(np.min(np.abs(ev))))
    return neg, smallest


def count_below(op, thresh: float, method="auto", seed=0, retries=3) -> int:
    """Number of eigenvalues strictly below ``thresh``."""
    n = _n_of(op)
    if method == "auto":
        explicit = _is_explicit(op)
        method = "ldl" if (explicit and n <= LDL_MAX) or n <= DENSE_MAX else "lanczos"
    if method == "lanczos":
        return int(eig_extreme(op, "low", threshold=thresh, method="lanczos", seed=seed).eigenvalues.size)
    M = np.array(_dense(op), dtype=float)
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    a = thresh
    for attempt in range(retries + 1):
        neg, smallest = ldl_inertia(M, a)
        if smallest > PIVOT_TOL * scale:
            return neg
        a = thresh + (attempt + 1) * 1e-9 * max(1.0, abs(thresh))
    raise SingularShift(f"threshold {thresh} coincides with an eigenvalue")


def projector_below(op, thresh: float, method="auto", seed=0) -> Projector:
    r = eig_extreme(op, "low", threshold=thresh, method=method, seed=seed)
    return Projector(r.vectors, r.eigenvalues)


def nb_spectrum(Bm, count: int, seed=0) -> np.ndarray:
    """Largest-magnitude eigenvalues of the nonbacktracking operator, sorted by modulus."""
    if isinstance(Bm, SparseGraph):
        Bm = nb_matrix(Bm)
    size = Bm.size
    if count > size:
        raise ConfigError("count exceeds operator size")
    if size <= 400 or count >= size - 2:
        w = np.linalg.eigvals(Bm.to_dense())
    else:
        v0 = np.random.default_rng(seed).random(size)
        try:
            w = eigs(Bm.matrix, k=count, which="LM", v0=v0, maxiter=20 * size,
                     ncv=max(2 * count + 1, 40), return_eigenvectors=False)
        except ArpackNoConvergence as e:
            raise NoConvergence(str(e), e.eigenvalues) from None
    order = np.lexsort((-w.real, -np.abs(w)))
    return w[order][:count]


IHARA_BASS_MAX_N = 40


def ihara_bass_sides(g: SparseGraph, t: float):
    """(det(I - tB), det(H(t)) (1 - t^2)^(m - n)) as (sign, log|.|) pairs."""
    if g.n > IHARA_BASS_MAX_N:
        raise TooLarge(f"dense determinant check limited to n <= {IHARA_BASS_MAX_N}")
    if abs(1.0 - t * t) <= 1e-6:
        raise ConfigError("t too close to +-1")
    Bm = nb_matrix(g).to_dense()
    sl, ll = np.linalg.slogdet(np.eye(Bm.shape[0]) - t * Bm) if Bm.size else (1.0, 0.0)
    ev = np.linalg.eigvalsh(bethe_hessian(g, t).to_dense())
    sh = float(np.prod(np.sign(ev)))
    lh = float(np.sum(np.log(np.abs(ev))))
    f = 1.0 - t * t
    p = g.m - g.n
    sr = sh * (np.sign(f) ** (p % 2))
    lr = lh + p * np.log(abs(f))
    return (float(sl), float(ll)), (float(sr), float(lr))


def ihara_bass_residual(g: SparseGraph, t: float) -> float:
    (sl, ll), (sr, lr) = ihara_bass_sides(g, t)
    if sl == 0.0 or sr == 0.0:
        L = sl * np.exp(ll)
        R = sr * np.exp(lr)
        return float(abs(L - R) / max(1.0, abs(L)))
    if ll > 0:
        return float(abs(1.0 - (sr / sl) * np.exp(lr - ll)))
    return float(abs(np.exp(ll) - sl * sr * np.exp(lr)))


def zero_row_col(M, i):
    if isinstance(M, (SymMatrix, MOperator)):
        return M.zero_rows_cols(i)
    out = np.array(M, dtype=float, copy=True)
    out[i, :] = 0.0
    out[:, i] = 0.0
    return out
