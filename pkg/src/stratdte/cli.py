"""Batch command line interface.

Three subcommands:

* ``estimate``: read an experiment from CSV, estimate the distributional
  or probability contrast between two arms with cross-fitted
  adjustment, and write curves plus a run manifest.
* ``simulate``: run the built-in synthetic designs through the Monte
  Carlo harness and write per-decile accuracy and coverage summaries.
* ``randomize-check``: replicate a randomization scheme and report how
  far realized arm shares drift from their targets.

Exit codes: 0 success, 2 configuration problems, 3 input-data problems,
4 estimation failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from ._kernels import USING_NUMBA
from .core import Dataset, explicit_grid, quantile_grid, validate_dataset
from .errors import ConfigError, DataError, EstimationError, MissingColumn, ParseError
from .estimators import adjusted_cdf, adjusted_pmf, dte, pte
from .inference import influence, multiplier_bootstrap, pointwise_ci, variance, with_band
from .learners import LEARNER_KINDS, LearnerSpec
from .nuisance import fit_crossfit, make_folds
from .randomization import SCHEMES, SchemeSpec, check_convergence
from .simulation import (
    DgpSpec,
    EstimatorConfig,
    rmse_reduction,
    run_monte_carlo,
)

__all__ = ["main", "ingest_csv", "build_parser"]


def ingest_csv(
    path, outcome_col, treatment_col, stratum_col, covariate_cols=None
) -> Dataset:
    """Load one experiment from a delimited text file.

    Treatment and stratum labels are mapped to codes 1, 2, ... in order
    of first appearance; the original labels ride along on the dataset.
    ``covariate_cols`` defaults to every remaining column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in (outcome_col, treatment_col, stratum_col):
            if col not in header:
                raise MissingColumn(f"column {col!r} not in header {header}")
        if covariate_cols is None:
            reserved = {outcome_col, treatment_col, stratum_col}
            covariate_cols = [h for h in header if h not in reserved]
        else:
            for col in covariate_cols:
                if col not in header:
                    raise MissingColumn(f"column {col!r} not in header {header}")
        idx = {h: j for j, h in enumerate(header)}
        y_j = idx[outcome_col]
        w_j = idx[treatment_col]
        s_j = idx[stratum_col]
        x_js = [idx[c] for c in covariate_cols]
        y, w, s = [], [], []
        x_rows = []
        arm_codes, stratum_codes = {}, {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(line_no, "<row>", f"{len(row)} cells, expected {len(header)}")
            try:
                y.append(float(row[y_j]))
            except ValueError:
                raise ParseError(line_no, outcome_col, f"not a number: {row[y_j]!r}") from None
            xs = []
            for col, j in zip(covariate_cols, x_js):
                try:
                    xs.append(float(row[j]))
                except ValueError:
                    raise ParseError(line_no, col, f"not a number: {row[j]!r}") from None
            x_rows.append(xs)
            w_label = row[w_j].strip()
            s_label = row[s_j].strip()
            w.append(arm_codes.setdefault(w_label, len(arm_codes) + 1))
            s.append(stratum_codes.setdefault(s_label, len(stratum_codes) + 1))
        if not y:
            raise DataError(f"{path}: no data rows")
    return Dataset(
        y=np.asarray(y),
        w=np.asarray(w, dtype=np.int64),
        s=np.asarray(s, dtype=np.int64),
        x=np.asarray(x_rows, dtype=np.float64).reshape(len(y), len(covariate_cols)),
        arm_labels=tuple(arm_codes),
        stratum_labels=tuple(stratum_codes),
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def _float_list(text, flag):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _curve_grid(args, data):
    if args.grid is not None:
        return explicit_grid(_float_list(args.grid, "--grid"))
    probs = _float_list(args.grid_quantiles, "--grid-quantiles")
    return quantile_grid(data.y, probs)


def _resolve_arms(args, data):
    labels = list(data.arm_labels)
    if args.arms is None:
        if len(labels) != 2:
            raise ConfigError(
                f"{len(labels)} arms present; pick two with --arms LABEL,LABEL"
            )
        pair = [labels[1], labels[0]]
    else:
        pair = [tok.strip() for tok in args.arms.split(",")]
        if len(pair) != 2 or pair[0] == pair[1]:
            raise ConfigError("--arms expects two distinct labels, LABEL,LABEL")
        for label in pair:
            if label not in labels:
                raise ConfigError(f"arm label {label!r} not in data {labels}")
    return pair, (labels.index(pair[0]) + 1, labels.index(pair[1]) + 1)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _opt_list(arr):
    return None if arr is None else [float(v) for v in np.asarray(arr)]


def cmd_estimate(args) -> int:
    covariates = None
    if args.covariate_cols is not None:
        covariates = [c.strip() for c in args.covariate_cols.split(",") if c.strip()]
    data = ingest_csv(
        args.input, args.outcome_col, args.treatment_col, args.stratum_col, covariates
    )
    arm_pair, arms = _resolve_arms(args, data)
    table = validate_dataset(data)
    grid = _curve_grid(args, data)
    if args.level <= 0.0 or args.level >= 1.0:
        raise ConfigError("--level must lie strictly between 0 and 1")
    alpha = 1.0 - args.level
    learner = LearnerSpec(kind=args.learner)
    root = np.random.SeedSequence(args.seed)
    fold_seed, boot_seed = root.spawn(2)
    plan = make_folds(data.n, args.folds, seed=fold_seed)
    pmf = "difference" if args.kind == "pte" else None
    fit = fit_crossfit(data, grid, arms, learner, plan, pmf=pmf)
    if args.kind == "dte":
        curve = dte(
            adjusted_cdf(data, table, grid, arms[0], fit),
            adjusted_cdf(data, table, grid, arms[1], fit),
        )
    else:
        curve = pte(
            adjusted_pmf(data, table, grid, arms[0], fit),
            adjusted_pmf(data, table, grid, arms[1], fit),
        )
    infl = influence(data, table, grid, arms, fit, delta=curve.estimate, kind=args.kind)
    curve = pointwise_ci(curve, variance(infl), alpha=alpha)
    band_quantile = None
    if args.bootstrap > 0:
        band = multiplier_bootstrap(
            infl, args.bootstrap, seed=boot_seed, mode="uniform", alpha=alpha
        )
        curve = with_band(curve, band)
        band_quantile = band.sup_quantile
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "curves.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid", "estimate", "se", "ci_lo", "ci_hi", "band_lo", "band_hi"])
        for j in range(len(grid)):
            writer.writerow(
                [
                    _fmt(grid.locations[j]),
                    _fmt(curve.estimate[j]),
                    _fmt(curve.se[j]),
                    _fmt(curve.ci_lo[j]),
                    _fmt(curve.ci_hi[j]),
                    _fmt(None if curve.band_lo is None else curve.band_lo[j]),
                    _fmt(None if curve.band_hi is None else curve.band_hi[j]),
                ]
            )
    _write_json(
        os.path.join(args.out, "curves.json"),
        {
            "kind": args.kind,
            "arms": arm_pair,
            "arm_codes": list(arms),
            "grid": _opt_list(grid.locations),
            "estimate": _opt_list(curve.estimate),
            "se": _opt_list(curve.se),
            "ci_lo": _opt_list(curve.ci_lo),
            "ci_hi": _opt_list(curve.ci_hi),
            "band_lo": _opt_list(curve.band_lo),
            "band_hi": _opt_list(curve.band_hi),
            "sup_quantile": band_quantile,
            "level": args.level,
            "bootstrap": args.bootstrap,
        },
    )
    _write_json(
        os.path.join(args.out, "manifest.json"),
        {
            "command": "estimate",
            "version": __version__,
            "input": args.input,
            "n": data.n,
            "d_x": data.d_x,
            "outcome_col": args.outcome_col,
            "treatment_col": args.treatment_col,
            "stratum_col": args.stratum_col,
            "covariate_cols": covariates,
            "arm_labels": list(data.arm_labels),
            "stratum_labels": list(data.stratum_labels),
            "arm_stratum_counts": table.n_ws.astype(int).tolist(),
            "assignment_shares": [[float(v) for v in row] for row in table.pi_hat],
            "kind": args.kind,
            "learner": asdict(learner),
            "folds": args.folds,
            "level": args.level,
            "bootstrap": args.bootstrap,
            "seed": args.seed,
            "numba": bool(USING_NUMBA),
            "nuisance_fallbacks": fit.fallbacks,
        },
    )
    print(
        f"estimate: {args.kind} for {arm_pair[0]} vs {arm_pair[1]} at "
        f"{len(grid)} thresholds (n={data.n}) -> {args.out}"
    )
    return 0


_SIM_MENU = {
    "empirical": lambda: EstimatorConfig(name="empirical", kind="empirical"),
    "linear": lambda: EstimatorConfig(name="linear", learner=LearnerSpec(kind="linear")),
    "logistic": lambda: EstimatorConfig(
        name="logistic", learner=LearnerSpec(kind="logistic")
    ),
    "ml": lambda: EstimatorConfig(name="ml", learner=LearnerSpec(kind="boost")),
    "oracle": lambda: EstimatorConfig(name="oracle", kind="oracle"),
}


def cmd_simulate(args) -> int:
    names = [tok.strip() for tok in args.estimators.split(",") if tok.strip()]
    for name in names:
        if name not in _SIM_MENU:
            raise ConfigError(f"unknown estimator {name!r}; menu: {sorted(_SIM_MENU)}")
    if len(set(names)) != len(names):
        raise ConfigError("estimator names repeat")
    if args.kind == "discrete" and args.grid is None:
        raise ConfigError("discrete outcomes need a fixed --grid of thresholds")
    configs = tuple(_SIM_MENU[name]() for name in names)
    try:
        spec = DgpSpec(kind=args.kind, n=args.n, n_strata=args.strata, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    locations = None if args.grid is None else _float_list(args.grid, "--grid")
    probs = _float_list(args.grid_quantiles, "--grid-quantiles")
    report = run_monte_carlo(
        spec,
        args.reps,
        configs=configs,
        probs=probs,
        locations=locations,
        folds=args.folds,
        alpha=1.0 - args.level,
        seed=args.seed,
        truth_size=args.truth_size,
    )
    os.makedirs(args.out, exist_ok=True)
    rows = report.summary_rows()
    with open(os.path.join(args.out, "mc.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        fields = ["estimator", "grid", "rmse", "bias", "coverage", "mean_ci_length"]
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["estimator"]] + [_fmt(row[f]) for f in fields[1:]])
    payload = {
        "command": "simulate",
        "version": __version__,
        "design": {
            "kind": spec.kind,
            "n": spec.n,
            "strata": spec.n_strata,
            "covariates": spec.d_x,
            "score_coefficient": spec.gamma,
            "treated_share": spec.pi,
        },
        "reps": args.reps,
        "folds": args.folds,
        "level": args.level,
        "seed": args.seed,
        "truth_size": args.truth_size,
        "grid_probs": None if report.probs is None else list(report.probs),
        "grid_locations": list(report.locations),
        "estimators": {},
    }
    for name, metrics in report.metrics.items():
        payload["estimators"][name] = {
            "rmse": _opt_list(metrics.rmse),
            "bias": _opt_list(metrics.bias),
            "coverage": _opt_list(metrics.coverage),
            "mean_ci_length": _opt_list(metrics.mean_ci_length),
            "mean_variance_diag": _opt_list(metrics.mean_omega),
        }
        if name != "empirical" and "empirical" in report.metrics:
            payload["estimators"][name]["rmse_reduction_pct"] = _opt_list(
                rmse_reduction(metrics, report.metrics["empirical"])
            )
    _write_json(os.path.join(args.out, "mc.json"), payload)
    print(
        f"simulate: {args.kind} design, n={args.n}, reps={args.reps}, "
        f"estimators={','.join(names)} -> {args.out}"
    )
    return 0


def cmd_randomize_check(args) -> int:
    spec = SchemeSpec.balanced(
        args.scheme, n_strata=args.strata, n_arms=args.arms, gamma=args.gamma
    )
    report = check_convergence(spec, args.n, args.reps, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    per_rep = report.per_rep_max
    payload = {
        "command": "randomize-check",
        "version": __version__,
        "scheme": args.scheme,
        "n": args.n,
        "reps": args.reps,
        "strata": args.strata,
        "arms": args.arms,
        "gamma": args.gamma,
        "seed": args.seed,
        "targets": [[float(v) for v in row] for row in spec.targets],
        "max_deviation_by_cell": [[float(v) for v in row] for row in report.max_by_cell],
        "per_rep_max_deviation": _opt_list(per_rep),
        "mean_per_rep_max": float(np.nanmean(per_rep)),
        "worst_per_rep_max": float(np.nanmax(per_rep)),
    }
    _write_json(os.path.join(args.out, "convergence.json"), payload)
    print(
        f"randomize-check: {args.scheme}, n={args.n}, reps={args.reps}, "
        f"worst deviation {np.nanmax(per_rep):.6f} -> {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratdte",
        description="Distributional treatment effects under stratified randomization.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate contrasts from a CSV experiment")
    est.add_argument("--input", required=True, help="CSV file with one row per unit")
    est.add_argument("--outcome-col", required=True)
    est.add_argument("--treatment-col", required=True)
    est.add_argument("--stratum-col", required=True)
    est.add_argument(
        "--covariate-cols",
        default=None,
        help="comma-separated column names; default: every remaining column",
    )
    est.add_argument(
        "--arms",
        default=None,
        help="LABEL,LABEL contrast as first minus second; default with two arms: "
        "second-appearing label minus first-appearing",
    )
    est.add_argument("--kind", choices=("dte", "pte"), default="dte")
    grid_group = est.add_mutually_exclusive_group()
    grid_group.add_argument("--grid", default=None, help="comma-separated thresholds")
    grid_group.add_argument(
        "--grid-quantiles",
        default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
        help="comma-separated pooled-outcome quantile levels",
    )
    est.add_argument("--learner", choices=LEARNER_KINDS, default="boost")
    est.add_argument("--folds", type=int, default=5)
    est.add_argument("--bootstrap", type=int, default=0, help="multiplier draws; 0 = off")
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", required=True, help="output directory")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="Monte Carlo on the built-in designs")
    sim.add_argument("--kind", choices=("continuous", "discrete"), default="continuous")
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--strata", type=int, default=4)
    sim.add_argument(
        "--estimators",
        default="empirical,linear,ml",
        help=f"comma-separated from {sorted(_SIM_MENU)}",
    )
    sim.add_argument("--folds", type=int, default=2)
    grid_group = sim.add_mutually_exclusive_group()
    grid_group.add_argument(
        "--grid", default=None, help="fixed comma-separated thresholds"
    )
    grid_group.add_argument(
        "--grid-quantiles", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--truth-size", type=int, default=10**6)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    rnd = sub.add_parser("randomize-check", help="target-share convergence of a scheme")
    rnd.add_argument("--scheme", choices=SCHEMES, required=True)
    rnd.add_argument("--n", type=int, default=1000)
    rnd.add_argument("--reps", type=int, default=200)
    rnd.add_argument("--strata", type=int, default=4)
    rnd.add_argument("--arms", type=int, default=2)
    rnd.add_argument("--gamma", type=float, default=2.0 / 3.0)
    rnd.add_argument("--seed", type=int, default=0)
    rnd.add_argument("--out", required=True)
    rnd.set_defaults(func=cmd_randomize_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
