"""Graphs and the matrices built from them.

Everything here is symmetric and real.  Products that fill in (nonbacktracking
powers at moderate ``ell`` reach every vertex pair) switch to dense storage once
the density passes ``DENSE_FILL``; the ``SymMatrix`` wrapper hides which one is in use.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, OracleTooLarge

DROP_TOL = 1e-14
DENSE_FILL = 0.2


class SparseGraph:
    """Simple undirected graph on vertices 0..n-1 with a sorted edge array."""

    def __init__(self, n: int, edges: np.ndarray):
        self.n = int(n)
        self.edges = edges
        self.edges.setflags(write=False)
        self.degrees = np.bincount(edges.ravel(), minlength=self.n).astype(np.int64)
        self._adj = None
        self._keys = None

    @classmethod
    def from_pairs(cls, n, u, v, strict=True):
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise ConfigError("endpoint arrays differ in length")
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ConfigError("vertex index out of range")
        if np.any(u == v):
            if strict:
                raise ConfigError("self-loops are not allowed")
            keep = u != v
            u, v = u[keep], v[keep]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = np.unique(lo * n + hi)
        if key.size != lo.size and strict:
            raise ConfigError("duplicate edges are not allowed")
        edges = np.column_stack([key // n, key % n]).astype(np.int64)
        return cls(n, edges)

    @classmethod
    def from_edges(cls, n, edges, strict=True):
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls.from_pairs(n, e[:, 0], e[:, 1], strict=strict)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> sp.csr_matrix:
        if self._adj is None:
            u, v = self.edges[:, 0], self.edges[:, 1]
            data = np.ones(2 * self.m)
            A = sp.csr_matrix(
                (data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(self.n, self.n)
            )
            A.sort_indices()
            self._adj = A
        return self._adj

    def keys(self) -> np.ndarray:
        if self._keys is None:
            self._keys = self.edges[:, 0] * self.n + self.edges[:, 1]
        return self._keys

    def edge_set(self) -> set:
        return set(map(tuple, self.edges.tolist()))

    def has_edge(self, u, v) -> bool:
        a, b = min(u, v), max(u, v)
        key = a * self.n + b
        ks = self.keys()
        i = np.searchsorted(ks, key)
        return bool(i < ks.size and ks[i] == key)

    def __eq__(self, other):
        return (
            isinstance(other, SparseGraph)
            and self.n == other.n
            and np.array_equal(self.edges, other.edges)
        )

    def __repr__(self):
        return f"SparseGraph(n={self.n}, m={self.m})"


class SymMatrix:
    """Exactly symmetric real matrix, stored as CSR or as a dense array."""

    def __init__(self, mat, symmetrize=True, drop_tol=DROP_TOL):
        if sp.issparse(mat):
            mat = sp.csr_matrix(mat, dtype=float)
            if symmetrize:
                mat = ((mat + mat.T) * 0.5).tocsr()
            if drop_tol:
                mat.data[np.abs(mat.data) < drop_tol] = 0.0
            mat.eliminate_zeros()
            mat.sort_indices()
        else:
            mat = np.array(mat, dtype=float)
            if symmetrize:
                mat = (mat + mat.T) * 0.5
            if drop_tol:
                mat[np.abs(mat) < drop_tol] = 0.0
        self.data = mat
        self.n = mat.shape[0]
        self._row_l1 = None
        self.meta = {}

    @property
    def is_dense(self) -> bool:
        return isinstance(self.data, np.ndarray)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.data)) if self.is_dense else self.data.nnz

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def row_l1(self) -> np.ndarray:
        if self._row_l1 is None:
            if self.is_dense:
                self._row_l1 = np.abs(self.data).sum(axis=1)
            else:
                self._row_l1 = np.asarray(abs(self.data).sum(axis=1)).ravel()
        return self._row_l1

    def matvec(self, x):
        return self.data @ x

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        return self.data.copy() if self.is_dense else self.data.toarray()

    def to_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.data) if self.is_dense else self.data

    def zero_rows_cols(self, idx) -> "SymMatrix":
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if self.is_dense:
            out = self.data.copy()
            out[idx, :] = 0.0
            out[:, idx] = 0.0
            return SymMatrix(out, symmetrize=False, drop_tol=0)
        keep = np.ones(self.n)
        keep[idx] = 0.0
        P = sp.diags(keep)
        return SymMatrix(P @ self.data @ P, symmetrize=False, drop_tol=0)

    def is_exactly_symmetric(self) -> bool:
        if self.is_dense:
            return bool(np.array_equal(self.data, self.data.T))
        return (self.data != self.data.T).nnz == 0


# Kept under the name used throughout the docs.
SparseSymMatrix = SymMatrix


def _maybe_dense(X, n):
    if sp.issparse(X) and X.nnz > DENSE_FILL * n * n:
        return X.toarray()
    return X


@dataclass(frozen=True, eq=False)
class TruncationResult:
    graph_B: SparseGraph
    Dbar: np.ndarray
    affected: np.ndarray
    truncated: np.ndarray
    B: int
    dbar_mode: str


def _ball(A: sp.csr_matrix, sources: np.ndarray, radius: int) -> np.ndarray:
    n = A.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[sources] = True
    frontier = seen.astype(float)
    for _ in range(radius):
        nxt = (A @ frontier) > 0
        nxt &= ~seen
        if not nxt.any():
            break
        seen |= nxt
        frontier = nxt.astype(float)
    return np.flatnonzero(seen)


def truncate(g: SparseGraph, B: int, ell: int = 0, dbar_mode: str = "pre") -> TruncationResult:
    """Drop every edge touching a vertex of degree > B.

    ``dbar_mode="pre"`` keeps the original degree on surviving vertices (and 0
    on truncated ones); ``"post"`` uses the degree inside the truncated graph.
    """
    if B < 1:
        raise ConfigError("B must be >= 1")
    if dbar_mode not in ("pre", "post"):
        raise ConfigError("dbar_mode must be 'pre' or 'post'")
    deg = g.degrees
    high = deg > B
    u, v = g.edges[:, 0], g.edges[:, 1]
    keep = ~(high[u] | high[v])
    gB = SparseGraph(g.n, g.edges[keep].copy())
    if dbar_mode == "pre":
        Dbar = np.where(high, 0, deg).astype(float)
    else:
        Dbar = gB.degrees.astype(float)
    truncated = np.flatnonzero(high)
    affected = _ball(g.adjacency(), truncated, 2 * ell + 1) if truncated.size else truncated
    return TruncationResult(gB, Dbar, affected, truncated, int(B), dbar_mode)


def bethe_hessian(obj, t: float, mode: str = "standard") -> SymMatrix:
    """I - tA + t^2 (D - I), with D replaced by Dbar in truncated mode."""
    if mode == "truncated":
        if not isinstance(obj, TruncationResult):
            raise ConfigError("truncated mode needs a TruncationResult")
        g, D = obj.graph_B, obj.Dbar
    elif mode == "standard":
        g = obj.graph_B if isinstance(obj, TruncationResult) else obj
        D = g.degrees.astype(float)
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    n = g.n
    H = sp.diags(1.0 + t * t * (D - 1.0)) - t * g.adjacency()
    return SymMatrix(sp.csr_matrix(H), symmetrize=False, drop_tol=0)


class NbMatrix:
    """Nonbacktracking operator on the 2m directed edges.

    Edge e = (u, v) with u < v yields arcs 2e = u->v and 2e+1 = v->u.
    """

    def __init__(self, g: SparseGraph):
        self.graph = g
        m = g.m
        tail = np.empty(2 * m, dtype=np.int64)
        head = np.empty(2 * m, dtype=np.int64)
        tail[0::2], head[0::2] = g.edges[:, 0], g.edges[:, 1]
        tail[1::2], head[1::2] = g.edges[:, 1], g.edges[:, 0]
        self.tail, self.head = tail, head
        order = np.argsort(tail, kind="stable")
        ptr = np.zeros(g.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(tail, minlength=g.n), out=ptr[1:])
        out_deg = ptr[head + 1] - ptr[head]
        rows = np.repeat(np.arange(2 * m), out_deg)
        offs = np.arange(rows.size) - np.repeat(np.cumsum(out_deg) - out_deg, out_deg)
        cols = order[np.repeat(ptr[head], out_deg) + offs]
        keep = cols != (rows ^ 1)
        rows, cols = rows[keep], cols[keep]
        self.matrix = sp.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(2 * m, 2 * m)
        )
        self.size = 2 * m

    def matvec(self, x):
        return self.matrix @ x

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def nb_matrix(g: SparseGraph) -> NbMatrix:
    return NbMatrix(g)


def nb_power(g: SparseGraph, ell: int) -> SymMatrix:
    """Nonbacktracking walk counts via the three-term recurrence."""
    if ell < 0:
        raise ConfigError("ell must be >= 0")
    n = g.n
    A = g.adjacency()
    I = sp.identity(n, format="csr")
    if ell == 0:
        return SymMatrix(I, symmetrize=False)
    if ell == 1:
        return SymMatrix(A.copy(), symmetrize=False)
    deg = g.degrees.astype(float)
    prev = I
    cur = A
    nxt = _maybe_dense(A @ A - sp.diags(deg), n)
    for _ in range(3, ell + 1):
        prev, cur = cur, nxt
        shift = deg - 1.0
        if isinstance(cur, np.ndarray):
            if sp.issparse(prev):
                prev = prev.toarray()
            nxt = A @ cur - shift[:, None] * prev
        else:
            nxt = A @ cur - sp.diags(shift) @ prev
            nxt = _maybe_dense(nxt, n)
    if sp.issparse(nxt):
        nxt = sp.csr_matrix(nxt)
    else:
        nxt = np.asarray(nxt)
    return SymMatrix(nxt, symmetrize=True, drop_tol=0)


def nb_power_apply(A: sp.csr_matrix, deg: np.ndarray, X: np.ndarray, ell: int) -> np.ndarray:
    """A^(ell) @ X without forming A^(ell); X may be a vector or a block."""
    if ell == 0:
        return X.copy()
    a1 = A @ X
    if ell == 1:
        return a1
    D = deg if X.ndim == 1 else deg[:, None]
    a0, a1, a2 = X, a1, A @ a1 - D * X
    D1 = D - 1.0
    for _ in range(3, ell + 1):
        a0, a1 = a1, a2
        a2 = A @ a1 - D1 * a0
    return a2


ORACLE_MAX_N = 50
ORACLE_MAX_ELL = 6


def nb_power_oracle(g: SparseGraph, ell: int) -> SymMatrix:
    """Count nonbacktracking walks by explicit depth-first enumeration."""
    if g.n > ORACLE_MAX_N or ell > ORACLE_MAX_ELL:
        raise OracleTooLarge(f"oracle limited to n <= {ORACLE_MAX_N}, ell <= {ORACLE_MAX_ELL}")
    if ell < 0:
        raise ConfigError("ell must be >= 0")
    nbrs = [[] for _ in range(g.n)]
    for u, v in g.edges.tolist():
        nbrs[u].append(v)
        nbrs[v].append(u)
    W = np.zeros((g.n, g.n))

    def walk(start, prev, cur, left):
        if left == 0:
            W[start, cur] += 1
            return
        for w in nbrs[cur]:
            if w != prev:
                walk(start, cur, w, left - 1)

    for s in range(g.n):
        walk(s, -1, s, ell)
    return SymMatrix(W, symmetrize=False, drop_tol=0)


def m_row_bound(B: int, ell: int, t: float) -> float:
    return float(B) ** (2 * ell + 3) * max(1.0, t * t, abs(t))


def m_matrix(tr: TruncationResult, ell: int, t: float) -> SymMatrix:
    """Explicit A^(ell) Hbar(t) A^(ell) over the truncated graph."""
    H = bethe_hessian(tr, t, mode="truncated").data
    if ell == 0:
        out = SymMatrix(H, symmetrize=False)
    else:
        Al = nb_power(tr.graph_B, ell).data
        if isinstance(Al, np.ndarray):
            HA = H @ Al
            prod = Al @ HA
        else:
            prod = _maybe_dense(Al @ H @ Al, tr.graph_B.n)
            if sp.issparse(prod):
                prod = sp.csr_matrix(prod)
        out = SymMatrix(prod, symmetrize=True)
    out.meta["row_l1_bound"] = m_row_bound(tr.B, ell, t)
    return out


class MOperator:
    """Matrix-free A^(ell) Hbar(t) A^(ell), optionally with rows/columns zeroed.

    ``mask`` is a 0/1 vector; masked-out indices behave as zeroed rows and columns.
    """

    def __init__(self, tr: TruncationResult, ell: int, t: float, mask=None):
        self.tr = tr
        self.ell = ell
        self.t = t
        self.n = tr.graph_B.n
        self.A = tr.graph_B.adjacency()
        self.deg = tr.graph_B.degrees.astype(float)
        self.hdiag = 1.0 + t * t * (tr.Dbar - 1.0)
        self.mask = np.ones(self.n) if mask is None else np.asarray(mask, dtype=float)
        self.meta = {"row_l1_bound": m_row_bound(tr.B, ell, t)}

    @property
    def shape(self):
        return (self.n, self.n)

    def matvec(self, X):
        X = np.asarray(X, dtype=float)
        mk = self.mask if X.ndim == 1 else self.mask[:, None]
        hd = self.hdiag if X.ndim == 1 else self.hdiag[:, None]
        Y = nb_power_apply(self.A, self.deg, X * mk, self.ell)
        Y = hd * Y - self.t * (self.A @ Y)
        return nb_power_apply(self.A, self.deg, Y, self.ell) * mk

    __matmul__ = matvec

    def zero_rows_cols(self, idx) -> "MOperator":
        mask = self.mask.copy()
        mask[np.atleast_1d(idx)] = 0.0
        return MOperator(self.tr, self.ell, self.t, mask)

    def to_dense(self) -> np.ndarray:
        D = self.matvec(np.eye(self.n))
        return (D + D.T) * 0.5


def m_operator(tr: TruncationResult, ell: int, t: float) -> MOperator:
    return MOperator(tr, ell, t)


def lift_vector(f, labels) -> np.ndarray:
    lab = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    return np.asarray(f, dtype=float)[lab]


def write_edgelist(g: SparseGraph, path) -> None:
    lines = [f"{g.n} {g.m}"] + [f"{u} {v}" for u, v in g.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> SparseGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise ConfigError("edge list must start with an 'n m' header")
    n, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m or any(len(r) != 2 for r in body):
        raise ConfigError(f"expected {m} 'u v' lines")
    e = np.array(body, dtype=np.int64).reshape(-1, 2)
    return SparseGraph.from_pairs(n, e[:, 0], e[:, 1])
