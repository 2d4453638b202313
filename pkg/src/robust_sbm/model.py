"""Block-model parameters, transition analysis, sampling and constant selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSpectrum,
    NegativeEntry,
    NoFeasibleParams,
    NonSymmetric,
    NormalizationViolated,
    NotSimplex,
    ProbabilityOverflow,
    SeriesSingularity,
)

SIMPLEX_TOL = 1e-12
NORMALIZATION_TOL = 1e-10
DELTA_GRID = tuple(0.01 * 2.0 ** j for j in range(-3, 7))
ELL_MAX = 40


@dataclass(frozen=True, eq=False)
class ModelParams:
    k: int
    M: np.ndarray
    pi: np.ndarray
    d: float

    def to_dict(self) -> dict:
        return {"k": self.k, "M": self.M.tolist(), "pi": self.pi.tolist(), "d": self.d}


@dataclass(frozen=True, eq=False)
class TransitionSpec:
    T: np.ndarray
    pi: np.ndarray
    eigenvalues: np.ndarray
    lambda2: float
    r: int
    Psi: np.ndarray
    rprime: int
    rprime_unclamped: int

    @property
    def k(self) -> int:
        return len(self.pi)

    @property
    def Psi_rprime(self) -> np.ndarray:
        return self.Psi[:, : self.rprime]

    @property
    def phi(self) -> np.ndarray:
        return self.Psi_rprime


@dataclass(frozen=True, eq=False)
class Assignment:
    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or (lab.size and (lab.min() < 0 or lab.max() >= self.k)):
            raise ConfigError("labels must be a vector with entries in [0, k)")
        object.__setattr__(self, "labels", lab.astype(np.int64))

    @property
    def n(self) -> int:
        return self.labels.size

    def one_hot(self) -> np.ndarray:
        X = np.zeros((self.n, self.k))
        X[np.arange(self.n), self.labels] = 1.0
        return X

    def indicator(self, c: int) -> np.ndarray:
        return (self.labels == c).astype(float)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class AlgoParams:
    eps: float
    ell: int
    delta_t: float
    t: float
    upsilon: float
    B: int
    eta: float
    Kcap: int
    tau: float
    C: float
    r: int
    rprime: int
    lambda2: float
    d: float
    p_value: float
    feasible: bool
    extra: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, **kw) -> "AlgoParams":
        """Apply overrides and recompute the dependent constants."""
        p = replace(self, **kw)
        eta = p.upsilon / 48.0
        Kcap = int(p.B) ** (2 * p.ell + 3) if "Kcap" not in kw else p.Kcap
        tau = _tau(p.C, Kcap, p.r, eta) if "tau" not in kw else p.tau
        return replace(p, eta=eta, Kcap=Kcap, tau=tau)

    def to_dict(self) -> dict:
        out = {
            k: getattr(self, k)
            for k in ("eps", "ell", "delta_t", "t", "upsilon", "B", "eta", "tau", "C",
                      "r", "rprime", "lambda2", "d", "p_value", "feasible")
        }
        out["Kcap"] = str(self.Kcap)
        return out


def validate_params(M, pi, d) -> ModelParams:
    M = np.array(M, dtype=float)
    pi = np.array(pi, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
        raise ConfigError(f"M must be a square k x k matrix with k >= 2, got shape {M.shape}")
    k = M.shape[0]
    if pi.shape != (k,):
        raise ConfigError(f"pi must have length {k}")
    d = float(d)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(pi)) and math.isfinite(d)):
        raise ConfigError("parameters must be finite")
    if np.max(np.abs(M - M.T)) > SIMPLEX_TOL:
        raise NonSymmetric("M is not symmetric")
    if np.any(M < 0):
        raise NegativeEntry("M has a negative entry")
    if d < 0:
        raise NegativeEntry("d must be nonnegative")
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > SIMPLEX_TOL:
        raise NotSimplex("pi must be strictly positive and sum to 1")
    dev = np.max(np.abs(M @ pi - 1.0))
    if dev > NORMALIZATION_TOL:
        raise NormalizationViolated(f"|M pi - 1|_inf = {dev:.3g}")
    M.setflags(write=False)
    pi.setflags(write=False)
    return ModelParams(k=k, M=M, pi=pi, d=d)


def _complement_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of unit vector u."""
    k = u.size
    return np.linalg.qr(np.column_stack([u, np.eye(k)]))[0][:, 1:k]


def analyze_transition(params: ModelParams, mult_tol: float = 1e-6) -> TransitionSpec:
    pi = params.pi
    sq = np.sqrt(pi)
    S = sq[:, None] * params.M * sq[None, :]
    Q = _complement_basis(sq)
    mu, Z = np.linalg.eigh(Q.T @ S @ Q)
    q = Q @ Z
    # |lambda| descending, positive first on ties
    order = sorted(range(mu.size), key=lambda i: (-round(abs(mu[i]), 12), -mu[i]))
    mu = mu[order]
    q = q[:, order]
    Psi = q / sq[:, None]
    for j in range(Psi.shape[1]):
        col = np.abs(Psi[:, j])
        i = int(np.flatnonzero(col >= col.max() - 1e-9)[0])
        if Psi[i, j] < 0:
            Psi[:, j] = -Psi[:, j]
    lam2 = float(mu[0])
    if abs(lam2) < 1e-12:
        raise DegenerateSpectrum("lambda_2 is zero: no nontrivial signal direction")
    if abs(lam2) >= 1 - 1e-12:
        raise DegenerateSpectrum("|lambda_2| = 1: no gap to the trivial eigenvalue")
    r = int(np.sum(np.abs(mu - lam2) <= mult_tol * abs(lam2)))
    rp_unclamped = r - 1 if lam2 > 0 else r
    T = params.M * pi[None, :]
    return TransitionSpec(
        T=T,
        pi=pi,
        eigenvalues=np.concatenate([[1.0], mu]),
        lambda2=lam2,
        r=r,
        Psi=Psi,
        rprime=max(rp_unclamped, 1),
        rprime_unclamped=rp_unclamped,
    )


def ks_signal(spec_or_lambda2, d: float) -> float:
    lam = spec_or_lambda2.lambda2 if isinstance(spec_or_lambda2, TransitionSpec) else spec_or_lambda2
    return lam * lam * d - 1.0


def _sample_pairs(rng, count, total):
    if count == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(total, size=count, replace=False))


def _tri_decode(idx: np.ndarray, s: int):
    """Map linear indices of the strict upper triangle of an s x s matrix to (i, j)."""
    # row i owns indices [i*s - i(i+1)/2, ...) of length s-1-i
    i = np.floor((2 * s - 1 - np.sqrt((2 * s - 1) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    start = i * s - i * (i + 1) // 2
    # guard against floating error at row boundaries
    over = idx >= start + (s - 1 - i)
    i = i + over
    start = i * s - i * (i + 1) // 2
    under = idx < start
    i = i - under
    start = i * s - i * (i + 1) // 2
    j = idx - start + i + 1
    return i, j


def sample_sbm(params: ModelParams, n: int, seed):
    """Draw a graph and labels.

    Each unordered pair is an edge independently with probability
    M[a, b] * d / n.  Per block pair we draw the Binomial edge count and then a
    uniformly random set of that many distinct pairs, which has the same law
    as independent coin flips but costs O(|E|).
    """
    from .graphmat import SparseGraph

    if n < params.k:
        raise ConfigError("n must be at least k")
    P = params.M * params.d / n
    if np.any(P > 1.0):
        raise ProbabilityOverflow("an edge probability exceeds 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(params.k, size=n, p=params.pi)
    members = [np.flatnonzero(labels == a) for a in range(params.k)]
    us, vs = [], []
    for a in range(params.k):
        sa = members[a].size
        for b in range(a, params.k):
            sb = members[b].size
            total = sa * (sa - 1) // 2 if a == b else sa * sb
            if total == 0 or P[a, b] == 0:
                continue
            m = int(rng.binomial(total, P[a, b]))
            idx = _sample_pairs(rng, m, total)
            if a == b:
                i, j = _tri_decode(idx, sa)
                u, v = members[a][i], members[a][j]
            else:
                u, v = members[a][idx // sb], members[b][idx % sb]
            us.append(u)
            vs.append(v)
    if us:
        u = np.concatenate(us)
        v = np.concatenate(vs)
    else:
        u = v = np.empty(0, dtype=np.int64)
    g = SparseGraph.from_pairs(n, u, v)
    return g, Assignment(labels, params.k)


def eval_p(lam: float, d: float, ell: int, t: float) -> float:
    """Tree-approximation of the per-vertex quadratic form, explicit sum."""
    s = -t * d ** (2 * ell - 1) * lam ** (2 * ell - 1) * (1 - lam**2 * d**2)
    s += t**2 * d ** (2 * ell) * lam ** (2 * ell)
    for j in range(ell + 1):
        s += d ** (2 * ell - j) * lam ** (2 * ell - 2 * j)
        s -= 2 * t * d ** (2 * ell - j + 1) * lam ** (2 * ell - 2 * j + 1)
        s += t**2 * d ** (2 * ell - j + 1) * lam ** (2 * ell - 2 * j)
    return float(s)


def eval_p_closed(lam: float, d: float, ell: int, t: float) -> float:
    """Same polynomial via the geometric-series factorization."""
    x = lam * lam * d
    if abs(x - 1.0) < 1e-12 or lam == 0.0:
        raise SeriesSingularity("lambda^2 d = 1 (or lambda = 0): series form undefined")
    ld = lam * d
    geo = (1.0 - x ** (-ell - 1)) / (1.0 - 1.0 / x)
    bracket = t * t - t / ld * (1.0 - ld * ld) + (1.0 - 2.0 * ld * t + d * t * t) * geo
    return float(ld ** (2 * ell) * bracket)


def default_truncation(d: float, ell: int) -> int:
    """Smallest B >= 8d whose Chernoff tail for Poisson(d) is below 1e-4."""
    if d <= 0:
        return 1
    cap = max(1, math.floor(10 * d * (ell + 1)))
    B = max(1, math.ceil(8 * d))
    while B < cap:
        log_tail = -d + B * (1.0 + math.log(d) - math.log(B))
        if log_tail <= math.log(1e-4):
            break
        B += 1
    return min(B, cap)


def _tau(C: float, Kcap: int, r: int, eta: float) -> float:
    try:
        return 2.0 * C * C * float(Kcap) ** 2 * r / (eta * eta)
    except OverflowError:
        return math.inf


def _t_of(delta: float, lam: float, d: float) -> float:
    return (1.0 + delta) / (lam * d)


def select_parameters(
    spec: TransitionSpec,
    d: float,
    overrides: Optional[Mapping] = None,
    *,
    ell_max: int = ELL_MAX,
    p_margin: float = 0.0,
    bulk_margin: float = 0.1,
) -> AlgoParams:
    """Pick (ell, delta) and derive every downstream constant.

    The search prefers the smallest ell, then the delta minimizing p(lambda_2).
    Candidates must keep 1/|t| at least (1 + bulk_margin) * sqrt(d), i.e. strictly
    outside the bulk of the nonbacktracking spectrum, otherwise the Bethe Hessian
    picks up spurious negative directions from bulk eigenvalues at finite n.
    """
    ov = dict(overrides or {})
    unknown = set(ov) - {"ell", "delta_t", "upsilon", "B", "C"}
    if unknown:
        raise ConfigError(f"unknown overrides: {sorted(unknown)}")
    lam = spec.lambda2
    eps = ks_signal(spec, d)
    edge = math.sqrt(d) * (1.0 + bulk_margin)
    deltas = [dl for dl in DELTA_GRID if (1.0 + dl) * edge <= abs(lam) * d]
    if "delta_t" in ov:
        deltas = [float(ov["delta_t"])]
    ells = [int(ov["ell"])] if "ell" in ov else list(range(1, ell_max + 1))
    if not deltas:
        raise NoFeasibleParams("no delta keeps 1/|t| outside the bulk; model too close to threshold")

    best = None
    for ell in ells:
        vals = [(eval_p(lam, d, ell, _t_of(dl, lam, d)), dl) for dl in deltas]
        pv, dl = min(vals)
        if pv < -p_margin:
            best = (ell, dl, pv)
            break
        if len(ells) == 1:
            best = (ell, dl, pv)
    if best is None:
        raise NoFeasibleParams("no (ell, delta) on the grid makes p(lambda_2) negative")
    ell, dl, pv = best
    t = _t_of(dl, lam, d)
    upsilon = float(ov.get("upsilon", abs(pv) / 2.0 * (lam * lam * d) ** (-2 * ell)))
    if upsilon <= 0:
        raise ConfigError("upsilon must be positive")
    B = int(ov.get("B", default_truncation(d, ell)))
    if B < 1:
        raise ConfigError("B must be >= 1")
    C = float(ov.get("C", 1.0 / math.sqrt(float(np.min(spec.pi)))))
    eta = upsilon / 48.0
    Kcap = B ** (2 * ell + 3)
    return AlgoParams(
        eps=eps,
        ell=ell,
        delta_t=dl,
        t=t,
        upsilon=upsilon,
        B=B,
        eta=eta,
        Kcap=Kcap,
        tau=_tau(C, Kcap, spec.r, eta),
        C=C,
        r=spec.r,
        rprime=spec.rprime,
        lambda2=lam,
        d=d,
        p_value=pv,
        feasible=pv < 0,
    )


def bethe_t_star(lam2: float, d: float) -> float:
    """Bethe Hessian parameter placing 1/t halfway (geometrically) between sqrt(d) and |lambda_2| d."""
    return 1.0 / math.sqrt(math.sqrt(d) * abs(lam2) * d)


_MODEL_KEYS = {"k", "M", "pi", "d"}


def parse_model_text(text: str) -> ModelParams:
    """Parse ``key = literal`` lines (JSON literals, ``#`` comments)."""
    vals = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in _MODEL_KEYS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key in vals:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        try:
            vals[key] = json.loads(rhs.strip())
        except json.JSONDecodeError as e:
            raise ConfigError(f"line {no}: bad literal for {key}: {e}") from None
    missing = _MODEL_KEYS - set(vals)
    if missing:
        raise ConfigError(f"missing keys: {sorted(missing)}")
    params = validate_params(vals["M"], vals["pi"], vals["d"])
    if vals["k"] != params.k:
        raise ConfigError(f"k = {vals['k']} does not match M of size {params.k}")
    return params


def format_model_text(params: ModelParams) -> str:
    return (
        f"k = {params.k}\n"
        f"M = {json.dumps(params.M.tolist())}\n"
        f"pi = {json.dumps(params.pi.tolist())}\n"
        f"d = {json.dumps(params.d)}\n"
    )


def load_model(path) -> ModelParams:
    return parse_model_text(Path(path).read_text())


def symmetric_model(k: int, lam2: float, d: float) -> ModelParams:
    """Uniform-prior model with T = lam2 I + (1 - lam2)/k 11^T."""
    M = (1 - lam2) * np.ones((k, k)) + k * lam2 * np.eye(k)
    return validate_params(M, np.full(k, 1.0 / k), d)


def write_assignment(a: Assignment, path) -> None:
    """One 0-indexed label per line."""
    Path(path).write_text("".join(f"{x}\n" for x in a.labels.tolist()))


def read_assignment(path, k: Optional[int] = None) -> Assignment:
    try:
        lab = np.array([int(s) for s in Path(path).read_text().split()], dtype=np.int64)
    except ValueError as e:
        raise ConfigError(f"{path}: labels must be integers ({e})") from None
    if k is None:
        k = int(lab.max()) + 1 if lab.size else 1
    return Assignment(lab, k)
