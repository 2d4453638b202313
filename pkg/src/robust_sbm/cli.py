"""Command-line entry point: robust-sbm <subcommand> [options]."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .adversary import CorruptionReport
from .errors import ConfigError, EmptySubspace, InvariantViolation, RobustSBMError
from .graphmat import read_edgelist, truncate, write_edgelist
from .harness import (
    ExperimentConfig,
    build_matrix,
    calibrate,
    corrupt,
    parse_seeds,
    prepare,
    run_pipeline,
    seed_streams,
    verify_ihara_bass,
    verify_spectra,
)
from .metrics import (
    correlation_expansion,
    majority_set,
    mutual_information,
    partition_advantage,
    weak_recovery_corr,
)
from .model import analyze_transition, read_assignment, sample_sbm, write_assignment
from .robustpca import check_invariants, recover_subspace, trace_csv
from .rounding import round_subspace

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3

RECORD_FIELDS = (
    "seed", "n", "adversary", "budget", "truncated", "phi_final", "deletions", "dim_U", "max_diag",
    "c_over_sqrt_n", "hull_residual", "y_quad", "rho", "raw_inner", "frob_w", "frob_x",
    "advantage", "mi_per_vertex", "wall_time", "config_hash", "error",
)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, set):
        return sorted(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def records_csv(records) -> str:
    buf = io.StringIO()
    buf.write("# run-record v1\n")
    w = csv.DictWriter(buf, RECORD_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in records:
        row = dict(r)
        if "phi_trace" in row:
            row["phi_final"] = row["phi_trace"][-1]
        if "error" in row:
            row["error"] = f"{row['error']}: {row.get('message', '')}"
        w.writerow(row)
    return buf.getvalue()


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seeds", None):
        cfg.seeds = parse_seeds(args.seeds)
    if getattr(args, "allow_below_ks", False):
        cfg.allow_below_ks = True
    return cfg


def _seed(args, cfg=None) -> int:
    if args.seed is not None:
        return args.seed
    if cfg is not None:
        return cfg.seeds[0]
    return 0


def cmd_sample(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    g, labels = sample_sbm(cfg.model, cfg.n, seed_streams(seed)["sample"])
    if not args.out:
        raise ConfigError("sample needs --out for the edge list")
    write_edgelist(g, args.out)
    write_assignment(labels, args.labels or f"{args.out}.labels")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    g = read_edgelist(args.graph)
    labels = read_assignment(args.labels) if args.labels else None
    if args.adversary == "monotone" and labels is None:
        raise ConfigError("monotone corruption needs --labels")
    budget = args.budget if args.budget is not None else int(math.floor(args.delta * g.n + 1e-9))
    gc, rep = corrupt(g, labels, args.adversary, budget, seed_streams(args.seed or 0)["adversary"])
    if not args.out:
        raise ConfigError("corrupt needs --out for the edge list")
    write_edgelist(gc, args.out)
    rep.save(args.log or f"{args.out}.edits")
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = _config(args)
    setup = prepare(cfg)
    g = read_edgelist(args.graph)
    seed = _seed(args, cfg)
    ss = seed_streams(seed)
    algo = setup.algo
    tr = truncate(g, algo.B, algo.ell, cfg.dbar_mode)
    Mt = build_matrix(tr, algo, g.n)
    sub, state = recover_subspace(Mt, algo.r, algo, ss["trim"])
    assignment, hw, emb = round_subspace(sub, setup.spec, ss["round"])
    if not args.out:
        raise ConfigError("recover needs --out for the assignment")
    write_assignment(assignment, args.out)
    if args.weights:
        np.savetxt(args.weights, hw.W, delimiter=",", header="rounding weights, one row per vertex")
    if args.trace:
        Path(args.trace).write_text(trace_csv(state))
    summary = {
        "seed": seed,
        "n": g.n,
        "deletions": len(state.removed),
        "dim_U": sub.dim,
        "max_diag": sub.diag_bound_witness,
        "c_over_sqrt_n": hw.c / math.sqrt(g.n),
        "invariants": check_invariants(state, sub, algo, algo.r),
    }
    sys.stdout.write(_json(summary))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    spec = analyze_transition(cfg.model)
    truth = read_assignment(args.truth, spec.k)
    pred = read_assignment(args.pred, spec.k)
    if pred.n != truth.n:
        raise ConfigError("prediction and truth differ in length")
    W = np.loadtxt(args.weights, delimiter=",", ndmin=2) if args.weights else pred
    score = weak_recovery_corr(W, truth, spec)
    expansion, direct = correlation_expansion(pred, truth, spec.pi)
    rec = {
        **score.to_dict(),
        "advantage": partition_advantage(majority_set(pred), truth),
        "mi_per_vertex": mutual_information(pred, truth) / truth.n,
        "expansion": expansion,
        "direct": direct,
    }
    if args.format == "csv":
        keys = sorted(rec)
        _emit(",".join(keys) + "\n" + ",".join(repr(rec[k]) for k in keys) + "\n", args.out)
    else:
        _emit(_json(rec), args.out)
    return EXIT_OK


def cmd_spectra(args) -> int:
    cfg = _config(args)
    rep = verify_spectra(cfg, nb_count=args.nb_count)
    _emit(_json(rep), args.out)
    return EXIT_OK


def cmd_ihara_bass(args) -> int:
    rep = verify_ihara_bass(args.graphs, args.n_max, args.seed or 0)
    if not args.rows:
        rep.pop("rows")
    _emit(_json(rep), args.out)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if args.workers:
        cfg.workers = args.workers
    records = []
    for rec in run_pipeline(cfg):
        records.append(rec)
        if args.progress:
            print(f"seed {rec['seed']}: rho={rec.get('rho', float('nan')):.4f}", file=sys.stderr)
    _emit(records_csv(records) if args.format == "csv" else _json(records), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    fixtures = calibrate(cfg, command=" ".join(["robust-sbm"] + sys.argv[1:]))
    _emit(_json(fixtures), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-sbm", description="Robust community recovery in sparse block models.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help, config=True, seeds=False, fmt=False):
        s = sub.add_parser(name, help=help)
        if config:
            s.add_argument("--config", help="experiment config (JSON)")
            s.add_argument("--allow-below-ks", action="store_true", help="run even when the model is below threshold")
        s.add_argument("--seed", type=int, help="seed for a single run")
        if seeds:
            s.add_argument("--seeds", help="seed list override, e.g. 0..19")
        if fmt:
            s.add_argument("--format", choices=("csv", "json"), default="json")
        s.add_argument("--out", help="output path (stdout when omitted, where allowed)")
        s.set_defaults(func=fn)
        return s

    s = add("sample", cmd_sample, "draw a graph and its labels")
    s.add_argument("--labels", help="label output path (default OUT.labels)")

    s = add("corrupt", cmd_corrupt, "apply a budgeted corruption to an edge list", config=False)
    s.add_argument("--graph", required=True)
    s.add_argument("--labels", help="true labels (monotone adversary)")
    s.add_argument("--adversary", choices=("none", "random", "hub", "monotone"), default="hub")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--budget", type=int)
    g.add_argument("--delta", type=float)
    s.add_argument("--log", help="edit log path (default OUT.edits)")

    s = add("recover", cmd_recover, "trim, recover the subspace and round")
    s.add_argument("--graph", required=True)
    s.add_argument("--weights", help="write rounding weights as CSV")
    s.add_argument("--trace", help="write the trimming trace as CSV")

    s = add("evaluate", cmd_evaluate, "score an assignment against the truth", fmt=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--weights", help="rounding weights CSV (scored instead of the one-hot prediction)")

    s = add("spectra", cmd_spectra, "outlier counts and quadratic-form checks", seeds=True)
    s.add_argument("--nb-count", type=int, default=0, help="also report this many nonbacktracking eigenvalues")

    s = add("ihara-bass", cmd_ihara_bass, "determinant identity residuals on random graphs", config=False)
    s.add_argument("--graphs", type=int, default=200)
    s.add_argument("--n-max", type=int, default=40)
    s.add_argument("--rows", action="store_true", help="include per-graph rows")

    s = add("pipeline", cmd_pipeline, "end-to-end runs over seeds", seeds=True, fmt=True)
    s.add_argument("--workers", type=int, help="worker processes")
    s.add_argument("--progress", action="store_true")

    add("calibrate", cmd_calibrate, "clean runs producing the reference fixtures", seeds=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (RobustSBMError, EmptySubspace) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
