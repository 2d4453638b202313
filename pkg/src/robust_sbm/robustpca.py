"""Iterative trimming of a corrupted symmetric matrix and projector post-processing."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptySubspace, IterationCapExceeded
from .model import AlgoParams
from .spectra import Projector, projector_below, zero_row_col


@dataclass
class TrimState:
    current: object
    removed: list
    phi_history: list
    step: int
    projector: Projector
    in_q: list = field(default_factory=list)


@dataclass
class RecoveredSubspace:
    U: np.ndarray
    S: np.ndarray
    diag_bound_witness: float
    kept_eigenvalues: np.ndarray
    trace_before: float

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    def quad(self, y: np.ndarray) -> float:
        """<y, P_U y> for a vector y."""
        z = self.U.T @ y
        return float(z @ z)


def trim_guard(params: AlgoParams, r: int) -> float:
    return 2.0 * float(params.Kcap) / params.eta * r


def trim(Mtilde, r: int, params: AlgoParams, seed, Q=None, method="auto") -> TrimState:
    """Zero rows/columns sampled from the negative-eigenspace projector diagonal until few negatives remain."""
    n = Mtilde.n if hasattr(Mtilde, "n") else Mtilde.shape[0]
    rng = np.random.default_rng(seed)
    guard = trim_guard(params, r)
    qset = None if Q is None else set(np.atleast_1d(Q).tolist())
    cur = Mtilde
    removed, hist, in_q = [], [], []
    for step in range(n + 1):
        P = projector_below(cur, -params.eta, method=method, seed=rng.integers(2**32))
        phi = P.rank
        hist.append(phi)
        if phi <= guard:
            return TrimState(cur, removed, hist, step, P, in_q)
        w = P.diag()
        w[removed] = 0.0
        w = np.clip(w, 0.0, None)
        i = int(rng.choice(n, p=w / w.sum()))
        removed.append(i)
        if qset is not None:
            in_q.append(i in qset)
        cur = zero_row_col(cur, i)
    raise IterationCapExceeded("trimming did not terminate within n steps")


def postprocess(state: TrimState, params: AlgoParams) -> RecoveredSubspace:
    """Drop heavy-diagonal indices, then keep the well-supported part of the restricted projector."""
    P = state.projector
    if P.rank == 0:
        raise EmptySubspace("no eigenvalues below -eta after trimming")
    n = P.n
    diag = P.diag()
    S = np.flatnonzero(diag <= params.tau / n)
    VS = P.basis[S, :]
    if VS.size == 0:
        raise EmptySubspace("every index exceeds the diagonal cutoff")
    Uloc, sig, _ = np.linalg.svd(VS, full_matrices=False)
    lam = sig**2
    keep = lam >= params.eta / float(params.Kcap)
    if not keep.any():
        raise EmptySubspace("restricted projector has no eigenvalue above eta/K")
    U = np.zeros((n, int(keep.sum())))
    U[S, :] = Uloc[:, keep]
    witness = float(np.max(np.einsum("ij,ij->i", U, U)))
    return RecoveredSubspace(U, S, witness, lam[keep], float(P.rank))


def recover_subspace(Mtilde, r: int, params: AlgoParams, seed, Q=None, method="auto"):
    state = trim(Mtilde, r, params, seed, Q=Q, method=method)
    return postprocess(state, params), state


def check_invariants(state: TrimState, sub: Optional[RecoveredSubspace], params: AlgoParams, r: int) -> dict:
    n = state.projector.n
    K = float(params.Kcap)
    out = {
        "terminated": state.phi_history[-1] <= trim_guard(params, r),
        "interlacing": all(b <= a for a, b in zip(state.phi_history, state.phi_history[1:])),
    }
    if sub is not None:
        out["delocalized"] = sub.diag_bound_witness <= K * params.tau / (params.eta * n) * (1 + 1e-9)
        out["dimension"] = sub.dim <= 2 * K * K * r / params.eta**2
        out["dim_vs_trace"] = sub.dim <= K / params.eta * sub.trace_before * (1 + 1e-9)
    return out


def trace_csv(state: TrimState) -> str:
    buf = io.StringIO()
    buf.write("# trim-trace v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "phi", "removed", "in_q"])
    for s, phi in enumerate(state.phi_history):
        rem = state.removed[s] if s < len(state.removed) else ""
        inq = state.in_q[s] if s < len(state.in_q) else ""
        w.writerow([s, phi, rem, "" if inq == "" else int(inq)])
    return buf.getvalue()
