"""Turn a recovered subspace into a random community assignment.

Vertices are embedded by a random r'-dimensional slice of the subspace, the
whole embedding is scaled by the largest factor that keeps every row inside
the convex hull of the community embeddings, and each vertex is then drawn from
its convex-combination weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionTooSmall, HullDegenerate, InvariantViolation
from .model import Assignment, TransitionSpec
from .simplex import solve_lp

HULL_TOL = 1e-7
CLAMP = 1e6


@dataclass
class VertexEmbedding:
    Mprime: np.ndarray


@dataclass
class HullWeights:
    c: float
    W: np.ndarray
    c_rows: np.ndarray

    def hull_residual(self, Mprime: np.ndarray, phi: np.ndarray) -> float:
        return float(np.max(np.linalg.norm(self.W @ phi - self.c * Mprime, axis=1), initial=0.0))


def random_subspace(U, rprime: int, seed) -> VertexEmbedding:
    """Basis of a Haar-random rprime-dimensional subspace of span(U)."""
    basis = U.U if hasattr(U, "U") else np.asarray(U)
    dim = basis.shape[1]
    if rprime < 1 or rprime > dim:
        raise DimensionTooSmall(f"need 1 <= rprime <= dim U = {dim}, got {rprime}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((dim, rprime))
    Q, R = np.linalg.qr(G)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return VertexEmbedding(basis @ Q)


def max_inscribe_scale(row, phi, pi=None, tol=1e-9):
    """Largest c with c*row in conv(phi_1..phi_k), and the optimal convex weights.

    LP over (w_1..w_k, c) >= 0:  max c  s.t.  sum_j w_j phi_j - c row = 0,  sum_j w_j = 1.
    A zero row can be scaled without limit; it gets c = inf and the prior weights.
    """
    phi = np.asarray(phi, dtype=float)
    k, rp = phi.shape
    row = np.asarray(row, dtype=float).ravel()
    if pi is None:
        pi = np.full(k, 1.0 / k)
    norm = float(np.linalg.norm(row))
    if norm == 0.0:
        return np.inf, np.asarray(pi, dtype=float).copy()
    # solve for the unit direction so tiny rows stay well conditioned
    row = row / norm
    A = np.zeros((rp + 1, k + 1))
    A[:rp, :k] = phi.T
    A[:rp, k] = -row
    A[rp, :k] = 1.0
    b = np.zeros(rp + 1)
    b[rp] = 1.0
    cost = np.zeros(k + 1)
    cost[k] = -1.0
    res = solve_lp(cost, A, b, tol=tol)
    if res.status == "infeasible":
        raise HullDegenerate("convex hull of community embeddings does not contain the origin")
    if res.status == "unbounded":
        raise HullDegenerate("hull scale unbounded for a nonzero row")
    w = np.clip(res.x[:k], 0.0, None)
    w /= w.sum()
    return float(res.x[k]) / norm, w


def hull_weights(Mprime: np.ndarray, spec: TransitionSpec) -> HullWeights:
    n = Mprime.shape[0]
    phi = spec.phi
    pi = np.asarray(spec.pi, dtype=float)
    cs = np.empty(n)
    Wstar = np.empty((n, spec.k))
    for i in range(n):
        cs[i], Wstar[i] = max_inscribe_scale(Mprime[i], phi, pi)
    finite = cs[np.isfinite(cs)]
    c = float(finite.min()) if finite.size else np.inf
    c = min(c, CLAMP * np.sqrt(n))
    # at scale c <= c_i the row is a mix of its extreme weights and the prior (which embeds to 0)
    frac = np.where(np.isfinite(cs), c / np.where(np.isfinite(cs), cs, 1.0), 0.0)
    W = frac[:, None] * Wstar + (1.0 - frac)[:, None] * pi[None, :]
    W = np.clip(W, 0.0, None)
    W /= W.sum(axis=1, keepdims=True)
    return HullWeights(c, W, cs)


def sample_assignment(W: np.ndarray, seed) -> Assignment:
    """One uniform draw per vertex, in index order."""
    rng = np.random.default_rng(seed)
    u = rng.random(W.shape[0])
    cum = np.cumsum(W, axis=1)
    labels = np.minimum((u[:, None] >= cum).sum(axis=1), W.shape[1] - 1)
    return Assignment(labels, W.shape[1])


def round_subspace(U, spec: TransitionSpec, seed, check=True):
    """Random slice, hull scaling, sampling.  Returns (assignment, weights, embedding)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_sub, s_draw = ss.spawn(2)
    emb = random_subspace(U, spec.rprime, s_sub)
    hw = hull_weights(emb.Mprime, spec)
    if check:
        if not np.allclose(hw.W.sum(axis=1), 1.0, atol=1e-9) or hw.W.min() < 0:
            raise InvariantViolation("weight rows are not on the simplex")
        resid = hw.hull_residual(emb.Mprime, spec.phi)
        if resid > HULL_TOL:
            raise InvariantViolation(f"hull residual {resid:.3g} exceeds {HULL_TOL}")
    return sample_assignment(hw.W, s_draw), hw, emb


def prior_weights(n: int, spec: TransitionSpec) -> HullWeights:
    """Fallback when no subspace was recovered: every vertex follows the prior."""
    return HullWeights(0.0, np.tile(np.asarray(spec.pi, dtype=float), (n, 1)), np.full(n, np.inf))
