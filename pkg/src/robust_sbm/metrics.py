"""Recovery scores: projected correlation, its expansion, partitions and mutual information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCommunity, ZeroNorm
from .model import Assignment


@dataclass
class RecoveryScore:
    rho: float
    raw_inner: float
    frob_w: float
    frob_x: float
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {"rho": self.rho, "raw_inner": self.raw_inner, "frob_w": self.frob_w, "frob_x": self.frob_x}


def _as_matrix(W, k):
    if isinstance(W, Assignment):
        return W.one_hot()
    return np.asarray(W, dtype=float)


def _cross(W: np.ndarray, X: Assignment) -> np.ndarray:
    """W^T X as a k x k matrix without forming the one-hot X."""
    k = X.k
    N = np.zeros((W.shape[1], k))
    for j in range(k):
        N[:, j] = W[X.labels == j].sum(axis=0)
    return N


def weak_recovery_corr(W, X: Assignment, spec) -> RecoveryScore:
    """Normalized <(W Psi)(W Psi)^T, (X Psi)(X Psi)^T> computed through k x k matrices."""
    Wm = _as_matrix(W, X.k)
    Psi = spec.Psi
    N = _cross(Wm, X)
    inner = Psi.T @ N @ Psi
    raw = float(np.sum(inner * inner))
    gw = Psi.T @ (Wm.T @ Wm) @ Psi
    sizes = X.sizes().astype(float)
    gx = Psi.T @ (sizes[:, None] * Psi)
    fw = float(np.linalg.norm(gw))
    fx = float(np.linalg.norm(gx))
    scale = Wm.shape[0]
    if fw <= 1e-12 * scale or fx <= 1e-12 * scale:
        raise ZeroNorm("projected Gram matrix is numerically zero")
    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.where(sizes > 0, N / np.where(sizes > 0, sizes, 1.0), 0.0)
    return RecoveryScore(raw / (fw * fx), raw, fw, fx, conf)


def confusion(Xhat: Assignment, X: Assignment) -> np.ndarray:
    """P[q, j] = fraction of community j assigned label q."""
    N = np.zeros((Xhat.k, X.k))
    np.add.at(N, (Xhat.labels, X.labels), 1.0)
    sizes = N.sum(axis=0)
    return N / np.where(sizes > 0, sizes, 1.0)


def correlation_expansion(Xhat: Assignment, X: Assignment, pi):
    """(expansion, direct): the confusion-matrix expansion of the projected inner product and the exact value.

    Both only need pi because Psi Psi^T = diag(1/pi) - 1 1^T for a pi-orthonormal
    eigenbasis completed by the constant vector.
    """
    pi = np.asarray(pi, dtype=float)
    n = X.n
    P = confusion(Xhat, X)
    q = np.bincount(Xhat.labels, minlength=Xhat.k) / n
    expansion = n * n * (np.sum(P**2 * pi[None, :] / pi[:, None]) - np.sum(q**2 / pi))
    N = np.zeros((Xhat.k, X.k))
    np.add.at(N, (Xhat.labels, X.labels), 1.0)
    G = np.diag(1.0 / pi) - np.ones((pi.size, pi.size))
    direct = float(np.trace(N.T @ G @ N @ G))
    return float(expansion), direct


def partition_advantage(S, X: Assignment) -> float:
    """max_i |Omega_i & S|/|Omega_i| - min_j |Omega_j & S|/|Omega_j|."""
    mask = np.zeros(X.n, dtype=bool)
    S = np.asarray(S)
    if S.dtype == bool:
        mask[:] = S
    else:
        mask[S.astype(np.int64)] = True
    sizes = X.sizes()
    if np.any(sizes == 0):
        raise EmptyCommunity("a community is empty")
    frac = np.bincount(X.labels[mask], minlength=X.k) / sizes
    return float(frac.max() - frac.min())


def majority_set(Xhat: Assignment) -> np.ndarray:
    """Vertices carrying the most frequent estimated label."""
    c = int(np.argmax(np.bincount(Xhat.labels, minlength=Xhat.k)))
    return Xhat.labels == c


def mutual_information(Xhat: Assignment, X: Assignment) -> float:
    """n times the plug-in mutual information (nats) of the empirical joint label distribution."""
    n = X.n
    J = np.zeros((Xhat.k, X.k))
    np.add.at(J, (Xhat.labels, X.labels), 1.0)
    J /= n
    a = J.sum(axis=1, keepdims=True)
    b = J.sum(axis=0, keepdims=True)
    nz = J > 0
    return float(n * np.sum(J[nz] * np.log(J[nz] / (a @ b)[nz])))
