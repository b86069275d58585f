"""Command-line driver: ``advprec {estimate,simulate,diagnose,asymptotics,lda}``.

Every subcommand accepts ``--seed``, ``--out`` (default stdout), ``--format``
and ``--config``. A config file holds ``key = value`` lines whose keys are
flag names; flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import diagnostics as diag
from .estimator_l2 import fit_l2
from .estimator_linf import SolverConfig, fit_linf, kkt_residual
from .experiments import (
    LDA_COLUMNS,
    SIMULATE_COLUMNS,
    ExperimentConfig,
    LDAConfig,
    as_jsonable,
    bundled_sanity_fixture,
    emit,
    lda_pipeline,
    load_expression_csv,
    read_key_value_config,
    run_synthetic,
)
from .metrics import METHODS, paper_grid
from .synth import ModelKind, default_scales, make_model


def _int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _methods(text: str) -> tuple[str, ...]:
    out = tuple(t.strip() for t in str(text).split(",") if t.strip())
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"methods must be a nonempty subset of {','.join(METHODS)}")
    return out


def _read_data_csv(path: str) -> np.ndarray:
    """Numeric CSV, one sample per row; a non-numeric first row is a header."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    try:
        [float(c) for c in lines[0].split(",")]
    except ValueError:
        lines = lines[1:]
    rows = []
    for lineno, ln in enumerate(lines, start=1):
        try:
            rows.append([float(c) for c in ln.split(",")])
        except ValueError:
            raise ValueError(f"{path}: non-numeric value in data row {lineno}") from None
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.asarray(rows)


# -- subcommands ------------------------------------------------------------------


def cmd_estimate(args) -> tuple[object, list[str] | None]:
    X = _read_data_csv(args.input)
    if args.norm == "linf":
        cfg = SolverConfig(center=args.center)
        res = fit_linf(X, args.delta, config=cfg, penalize_diagonal=args.penalize_diagonal)
        C = res.estimate
        info = {"objective": res.objective, "iterations": res.iterations, "kkt_residual": res.kkt_residual,
                "support_size": res.support_size}
    else:
        res = fit_l2(X, args.delta, center=args.center)
        C = res.estimate
        info = {"objective": res.objective, "lambda_star": res.lambda_star, "boundary": res.boundary}
    if args.format == "json":
        return {"norm": args.norm, "delta": args.delta, "estimate": C.tolist(), **info}, None
    d = C.shape[0]
    rows = [{"row": i, **{f"c{j}": float(C[i, j]) for j in range(d)}} for i in range(d)]
    return rows, ["row", *[f"c{j}" for j in range(d)]]


def cmd_simulate(args):
    scales = default_scales(args.d) if args.scales == "default" else np.ones(args.d)
    rows = []
    pd_adjusted = False
    for n in _int_list(args.n):
        cfg = ExperimentConfig(
            model=args.model, d=args.d, n=n, reps=args.reps, scales=scales,
            grid=paper_grid(args.grid_points), methods=args.methods, seed=args.seed,
        )
        res = run_synthetic(cfg)
        pd_adjusted = res.pd_adjusted
        rows.extend(res.rows)
    if pd_adjusted:
        print(f"note: {args.model} precision was adjusted to be positive definite", file=sys.stderr)
    if args.format == "json":
        return rows, None
    return rows, list(SIMULATE_COLUMNS)


def cmd_diagnose(args):
    truth = make_model(args.model, args.d)
    idx = diag.support_sets(truth.precision)
    rep = diag.diagnostics_report(truth.covariance, idx, args.delta, args.tau, args.alpha, args.c1, args.c2)
    data = as_jsonable(rep)
    if args.format == "json":
        return data, None
    rows = [{"field": k, "value": v if not isinstance(v, list) else ";".join(map(repr, v))} for k, v in data.items()]
    return rows, ["field", "value"]


def cmd_asymptotics(args):
    estimator = "exact" if args.estimator == "exact" else "surrogate"
    cfg = asy.AsymptoticsConfig(
        gamma=args.gamma, eta=args.eta, n_values=tuple(_int_list(args.n_list)), reps=args.reps,
        p=args.p, estimator=estimator, seed=args.seed,
    )
    truth = make_model(args.model, args.d) if args.model != "identity" else _identity(args.d)
    samples = asy.rescaled_errors(truth, cfg)
    summary = {"config": as_jsonable(cfg), "samples": [s.summary() for s in samples]}
    if args.format == "json":
        return summary, None
    rows = [
        {"n": s.n, "replicate": r, "i": i, "j": j, "value": v}
        for s in samples for (r, i, j, v) in s.rows()
    ]
    if args.out and args.out != "-":
        emit(summary, str(Path(args.out).with_suffix(".summary.json")), "json")
    return rows, ["n", "replicate", "i", "j", "value"]


def _identity(d: int):
    from .synth import GroundTruth

    return GroundTruth(np.eye(d), np.eye(d), frozenset(), False, None)


def cmd_lda(args):
    path = args.input or bundled_sanity_fixture()
    data = load_expression_csv(path)
    counts = data.counts()
    print(f"loaded {path}: n={len(data.labels)}, " + ", ".join(f"{k}={v}" for k, v in counts.items()), file=sys.stderr)
    rows = []
    for method in args.methods:
        cfg = LDAConfig(method=method, reps=args.reps, grid=paper_grid(args.grid_points),
                        screen_per_fold=args.screen_per_fold, seed=args.seed)
        rows.extend(lda_pipeline(data, args.genes, cfg).rows(args.genes, method))
    if args.format == "json":
        return rows, None
    return rows, list(LDA_COLUMNS)


# -- parser ------------------------------------------------------------------------


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advprec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    models = [k.value for k in ModelKind]

    p = sub.add_parser("estimate", help="fit a precision matrix to a numeric CSV")
    _shared(p)
    p.add_argument("--input", required=True)
    p.add_argument("--norm", choices=("linf", "l2"), default="linf")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--penalize-diagonal", action="store_true")
    p.add_argument("--center", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="synthetic edge-recovery benchmark")
    _shared(p)
    p.add_argument("--model", choices=models, default="ar2")
    p.add_argument("--d", type=int, default=30)
    p.add_argument("--n", default="40", help="sample size or comma-separated list")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", type=_methods, default=("perturbed", "l1"))
    p.add_argument("--grid-points", type=int, default=25)
    p.add_argument("--scales", choices=("default", "none"), default="default")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="incoherence and consistency constants of a model")
    _shared(p)
    p.add_argument("--model", choices=models, default="ar2")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=3.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--c1", type=float, default=0.5)
    p.add_argument("--c2", type=float, default=0.5)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("asymptotics", help="Monte Carlo rescaled errors")
    _shared(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--p", choices=("2", "inf"), default="2")
    p.add_argument("--estimator", choices=("exact", "surrogate"), default="exact")
    p.add_argument("--n-list", default="500,2000")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--model", choices=["identity", *models], default="identity")
    p.add_argument("--d", type=int, default=3)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("lda", help="nested cross-validated LDA on labelled expression data")
    _shared(p)
    p.add_argument("--input", help="CSV with a 'label' column (default: bundled synthetic fixture)")
    p.add_argument("--genes", type=int, default=40)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", type=lambda s: tuple(t for t in s.split(",") if t), default=("perturbed",))
    p.add_argument("--grid-points", type=int, default=25)
    p.add_argument("--screen-per-fold", action="store_true")
    p.set_defaults(func=cmd_lda)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    subparsers = parser._subparsers._group_actions[0].choices  # type: ignore[union-attr]
    required = {name: [a for a in sp._actions if a.required] for name, sp in subparsers.items()}
    # first pass without required checks so the config file can supply them
    for acts in required.values():
        for a in acts:
            a.required = False
    try:
        args = parser.parse_args(argv)
    finally:
        for acts in required.values():
            for a in acts:
                a.required = True
    sub = subparsers[args.command]
    if args.config:
        values = read_key_value_config(args.config)
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in values.items():
            if key not in actions or key in ("help", "config"):
                raise SystemExit(f"{args.config}: unknown key {key!r} for '{args.command}'")
            act = actions[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                defaults[key] = act.type(raw)
            else:
                defaults[key] = raw
            if act.choices is not None and defaults[key] not in act.choices:
                raise SystemExit(f"{args.config}: invalid value {raw!r} for {key!r}")
            act.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _apply_config(parser, argv)
    try:
        result, columns = args.func(args)
        text = emit(as_jsonable(result) if columns is None else result, args.out, args.format, columns)
    except (ValueError, OSError) as exc:
        print(f"advprec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.out in (None, "-"):
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
