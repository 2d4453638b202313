"""Experiment configuration, per-seed pipeline runs and verification suites."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import __version__
from .adversary import corrupt_hub, corrupt_monotone, corrupt_random, corruption_distance
from .errors import BelowThreshold, ConfigError, EmptySubspace, InvariantViolation, RobustSBMError
from .graphmat import (
    SparseGraph,
    bethe_hessian,
    lift_vector,
    m_matrix,
    m_operator,
    truncate,
)
from .metrics import (
    correlation_expansion,
    majority_set,
    mutual_information,
    partition_advantage,
    weak_recovery_corr,
)
from .model import (
    AlgoParams,
    ModelParams,
    TransitionSpec,
    analyze_transition,
    bethe_t_star,
    eval_p,
    ks_signal,
    load_model,
    sample_sbm,
    select_parameters,
    symmetric_model,
    validate_params,
)
from .robustpca import check_invariants, recover_subspace
from .rounding import prior_weights, round_subspace, sample_assignment
from .spectra import count_below, nb_spectrum

ADVERSARIES = ("none", "random", "hub", "monotone")
EXPLICIT_MAX_N = 2000


def parse_seeds(spec) -> list:
    """Accept a list, an int, or an inclusive range string 'A..B'."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, str):
        if ".." in spec:
            a, _, b = spec.partition("..")
            a, b = int(a), int(b)
            if b < a:
                raise ConfigError(f"empty seed range {spec!r}")
            return list(range(a, b + 1))
        return [int(spec)]
    seeds = [int(s) for s in spec]
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def model_from_source(src, base_dir: Optional[Path] = None) -> ModelParams:
    if isinstance(src, ModelParams):
        return src
    if isinstance(src, str):
        p = Path(src)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return load_model(p)
    if isinstance(src, dict):
        if "symmetric" in src:
            s = src["symmetric"]
            return symmetric_model(int(s["k"]), float(s["lambda2"]), float(s["d"]))
        extra = set(src) - {"k", "M", "pi", "d"}
        if extra:
            raise ConfigError(f"unknown model keys {sorted(extra)}")
        params = validate_params(src["M"], src["pi"], src["d"])
        if "k" in src and int(src["k"]) != params.k:
            raise ConfigError("k does not match M")
        return params
    raise ConfigError("model must be a path, a mapping, or ModelParams")


@dataclass
class ExperimentConfig:
    model: object
    n: int
    seeds: list
    adversary: str = "none"
    delta: float = 0.0
    overrides: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    allow_below_ks: bool = False
    dbar_mode: str = "pre"
    workers: int = 1

    def __post_init__(self):
        self.model = model_from_source(self.model)
        self.seeds = parse_seeds(self.seeds)
        if self.adversary not in ADVERSARIES:
            raise ConfigError(f"adversary must be one of {ADVERSARIES}")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if int(self.n) < 2:
            raise ConfigError("n must be >= 2")
        self.n = int(self.n)

    @property
    def budget(self) -> int:
        return int(math.floor(self.delta * self.n + 1e-9))

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "model" not in d or "n" not in d or "seeds" not in d:
            raise ConfigError("config needs model, n and seeds")
        d = dict(d)
        d["model"] = model_from_source(d["model"], base_dir)
        if isinstance(d.get("adversary"), dict):
            adv = d["adversary"]
            d["adversary"] = adv.get("kind", "none")
            d["delta"] = float(adv.get("delta", d.get("delta", 0.0)))
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            raw = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(raw, p.parent)

    def canonical(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "n": self.n,
            "seeds": self.seeds,
            "adversary": self.adversary,
            "delta": self.delta,
            "overrides": self.overrides,
            "allow_below_ks": self.allow_below_ks,
            "dbar_mode": self.dbar_mode,
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Setup:
    params: ModelParams
    spec: TransitionSpec
    algo: AlgoParams


def prepare(cfg: ExperimentConfig) -> Setup:
    spec = analyze_transition(cfg.model)
    if ks_signal(spec, cfg.model.d) <= 0 and not cfg.allow_below_ks:
        raise BelowThreshold(
            f"lambda_2^2 d - 1 = {ks_signal(spec, cfg.model.d):.4g} <= 0; pass --allow-below-ks to force"
        )
    algo = select_parameters(spec, cfg.model.d, cfg.overrides or None)
    return Setup(cfg.model, spec, algo)


def corrupt(g: SparseGraph, labels, kind: str, budget: int, seed):
    if kind == "none" or budget == 0:
        from .adversary import CorruptionReport

        return g, CorruptionReport([], set())
    if kind == "random":
        return corrupt_random(g, budget, seed)
    if kind == "hub":
        return corrupt_hub(g, budget, seed)
    if kind == "monotone":
        return corrupt_monotone(g, labels, budget, seed)
    raise ConfigError(f"unknown adversary {kind!r}")


def true_lift(spec: TransitionSpec, labels) -> np.ndarray:
    """Unit vector lifting the leading nontrivial eigenvector to the vertices."""
    y = lift_vector(spec.Psi[:, 0], labels)
    return y / np.linalg.norm(y)


def build_matrix(tr, algo: AlgoParams, n: int):
    if n <= EXPLICIT_MAX_N:
        return m_matrix(tr, algo.ell, algo.t)
    return m_operator(tr, algo.ell, algo.t)


def seed_streams(seed) -> dict:
    """Independent child streams per stage; the CLI stages reuse them so a split run matches the pipeline."""
    keys = ("sample", "adversary", "trim", "round")
    return dict(zip(keys, np.random.SeedSequence(seed).spawn(len(keys))))


def run_seed(cfg: ExperimentConfig, seed: int, setup: Optional[Setup] = None) -> dict:
    """Sample, corrupt, truncate, build, trim, round, score.  Invariants raise."""
    setup = setup or prepare(cfg)
    spec, algo = setup.spec, setup.algo
    t0 = time.perf_counter()
    ss = seed_streams(seed)
    s_sample, s_adv, s_trim, s_round = ss["sample"], ss["adversary"], ss["trim"], ss["round"]
    g, labels = sample_sbm(setup.params, cfg.n, s_sample)
    gc, rep = corrupt(g, labels, cfg.adversary, cfg.budget, s_adv)
    if corruption_distance(g, gc) != rep.budget_used:
        raise InvariantViolation("corruption distance differs from edits")
    tr = truncate(gc, algo.B, algo.ell, cfg.dbar_mode)
    Mt = build_matrix(tr, algo, cfg.n)
    y = true_lift(spec, labels)
    rec = {
        "seed": seed,
        "n": cfg.n,
        "adversary": cfg.adversary,
        "budget": rep.budget_used,
        "truncated": int(tr.truncated.size),
    }
    try:
        sub, state = recover_subspace(Mt, algo.r, algo, s_trim)
    except EmptySubspace:
        sub = None
        state = None
    if sub is None:
        hw = prior_weights(cfg.n, spec)
        assignment = sample_assignment(hw.W, s_round)
        rec.update(phi_trace=[0], deletions=0, dim_U=0, max_diag=0.0, c=0.0, c_over_sqrt_n=0.0,
                   hull_residual=0.0, y_quad=0.0, empty_subspace=True)
        inv = {}
    else:
        assignment, hw, emb = round_subspace(sub, spec, s_round)
        inv = check_invariants(state, sub, algo, algo.r)
        if not all(inv.values()):
            bad = [k for k, v in inv.items() if not v]
            raise InvariantViolation(f"trimming invariants failed: {bad}")
        rec.update(
            phi_trace=list(state.phi_history),
            deletions=len(state.removed),
            dim_U=sub.dim,
            max_diag=sub.diag_bound_witness,
            c=hw.c,
            c_over_sqrt_n=hw.c / math.sqrt(cfg.n),
            hull_residual=hw.hull_residual(emb.Mprime, spec.phi),
            y_quad=sub.quad(y),
            empty_subspace=False,
        )
    score = weak_recovery_corr(hw.W, labels, spec)
    expansion, direct = correlation_expansion(assignment, labels, spec.pi)
    rec.update(
        rho=score.rho,
        raw_inner=score.raw_inner,
        frob_w=score.frob_w,
        frob_x=score.frob_x,
        advantage=partition_advantage(majority_set(assignment), labels),
        mi_per_vertex=mutual_information(assignment, labels) / cfg.n,
        expansion=expansion,
        direct=direct,
        invariants=inv,
        wall_time=time.perf_counter() - t0,
    )
    return rec


def _run_one(args):
    cfg, seed = args
    try:
        return run_seed(cfg, seed)
    except InvariantViolation:
        raise
    except RobustSBMError as e:
        return {"seed": seed, "error": type(e).__name__, "message": str(e)}


def run_pipeline(cfg: ExperimentConfig) -> Iterator[dict]:
    """Stream one record per seed, in seed order."""
    setup = prepare(cfg)
    h = cfg.hash()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            for rec in ex.map(_run_one, [(cfg, s) for s in cfg.seeds]):
                rec["config_hash"] = h
                yield rec
        return
    for s in cfg.seeds:
        try:
            rec = run_seed(cfg, s, setup)
        except InvariantViolation:
            raise
        except RobustSBMError as e:
            rec = {"seed": s, "error": type(e).__name__, "message": str(e)}
        rec["config_hash"] = h
        yield rec


def record_digest(rec: dict) -> str:
    r = {k: v for k, v in rec.items() if k != "wall_time"}
    return hashlib.sha256(json.dumps(r, sort_keys=True, default=str).encode()).hexdigest()


# ---------------------------------------------------------------- verification suites


def verify_spectra_seed(setup: Setup, n: int, seed: int, nb_count: int = 0, untruncated: bool = True) -> dict:
    spec, algo, params = setup.spec, setup.algo, setup.params
    g, labels = sample_sbm(params, n, seed_streams(seed)["sample"])
    k = params.k
    t_star = bethe_t_star(spec.lambda2, params.d)
    out = {"seed": seed, "t_star": t_star}
    out["h_count"] = count_below(bethe_hessian(g, t_star), 0.0)
    tr = truncate(g, algo.B, algo.ell)
    Mb = m_operator(tr, algo.ell, algo.t) if n > 6000 else m_matrix(tr, algo.ell, algo.t)
    out["mbar_count"] = count_below(Mb, -algo.eta, seed=seed)
    if untruncated:
        full = truncate(g, max(1, int(g.degrees.max(initial=1))), algo.ell)
        Mf = m_operator(full, algo.ell, algo.t) if n > 6000 else m_matrix(full, algo.ell, algo.t)
        out["m_count"] = count_below(Mf, -algo.eta, seed=seed)
    x = lift_vector(spec.Psi[:, 0], labels)
    q = float(x @ Mb.matvec(x))
    out["quad"] = q
    out["quad_per_n"] = q / n
    out["upsilon"] = algo.upsilon
    out["p_lambda2"] = eval_p(spec.lambda2, params.d, algo.ell, algo.t)
    out["h_ok"] = k - 1 <= out["h_count"] <= k
    out["mbar_ok"] = algo.r <= out["mbar_count"] <= algo.r + 1
    out["quad_ok"] = q <= -algo.upsilon * n
    if nb_count:
        ev = nb_spectrum(g, nb_count, seed=seed)
        out["nb_eigs"] = [[float(z.real), float(z.imag)] for z in ev]
    return out


def verify_spectra(cfg: ExperimentConfig, nb_count: int = 0) -> dict:
    if cfg.n > 20000:
        raise ConfigError("spectral verification limited to n <= 20000")
    setup = prepare(cfg)
    rows = [verify_spectra_seed(setup, cfg.n, s, nb_count) for s in cfg.seeds]
    rate = lambda key: float(np.mean([r[key] for r in rows]))
    return {"rows": rows, "h_rate": rate("h_ok"), "mbar_rate": rate("mbar_ok"), "quad_rate": rate("quad_ok")}


def below_ks_counts(params: ModelParams, n: int, seed: int, margin: float = 0.1, points: int = 5) -> dict:
    """Negative counts of H(t) below the threshold, for t with 1/t between the bulk edge and d."""
    d = params.d
    lo, hi = math.sqrt(d) * (1 + margin), d
    inv = np.geomspace(lo, hi, points + 2)[1:-1]
    g, _ = sample_sbm(params, n, seed_streams(seed)["sample"])
    counts = [count_below(bethe_hessian(g, 1.0 / s), 0.0) for s in inv]
    return {"seed": seed, "inv_t": inv.tolist(), "counts": counts}


def random_graph(n: int, p: float, rng) -> SparseGraph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return SparseGraph.from_pairs(n, iu[keep], ju[keep])


IB_T_GRID = tuple(s * v for v in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9) for s in (1, -1))


def verify_ihara_bass(n_graphs: int = 200, n_max: int = 40, seed: int = 0, t_grid=IB_T_GRID) -> dict:
    from .spectra import ihara_bass_residual

    rng = np.random.default_rng(seed)
    worst = 0.0
    rows = []
    for gi in range(n_graphs):
        n = int(rng.integers(3, n_max + 1))
        p = float(rng.uniform(0.05, 0.5))
        g = random_graph(n, p, rng)
        res = max(ihara_bass_residual(g, t) for t in t_grid)
        rows.append({"graph": gi, "n": n, "m": g.m, "max_residual": res})
        worst = max(worst, res)
    return {"max_residual": worst, "graphs": n_graphs, "t_points": len(t_grid), "rows": rows}


# ---------------------------------------------------------------- calibration


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "se": se, "min": float(v.min()), "max": float(v.max()), "count": int(v.size)}


def calibrate(cfg: ExperimentConfig, command: str = "") -> dict:
    """Clean runs establishing the reference correlation and rounding scale."""
    clean = ExperimentConfig(**{**asdict(cfg), "model": cfg.model, "adversary": "none", "delta": 0.0})
    recs = [r for r in run_pipeline(clean) if "error" not in r]
    if not recs:
        raise InvariantViolation("every calibration seed failed")
    rho = summarize([r["rho"] for r in recs])
    rho_clean = rho["mean"] - 3 * rho["se"]
    if rho_clean <= 0:
        raise InvariantViolation(f"calibrated reference correlation is not positive ({rho_clean:.4g})")
    return {
        "provenance": {
            "generated_by": "robust-sbm calibrate",
            "command": command,
            "version": __version__,
            "date": _dt.date.today().isoformat(),
            "config_hash": clean.hash(),
            "config": clean.canonical(),
            "rule": "rho_clean = mean - 3 * standard error over calibration seeds",
        },
        "rho_clean": rho_clean,
        "rho": rho,
        "c_over_sqrt_n": summarize([r["c_over_sqrt_n"] for r in recs]),
        "advantage": summarize([r["advantage"] for r in recs]),
        "mi_per_vertex": summarize([r["mi_per_vertex"] for r in recs]),
    }
