"""Command-line interface: fit, optimize, sweep, evaluate, bounds, synth.

Every command writes JSON (to ``--out`` or stdout). Floats are rounded to
12 significant digits and field order is fixed, so identical invocations
produce identical bytes. Exit codes: 0 success, 1 runtime error, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, density, metrics, objective, optimizer, synth
from .data import GroupedLogits, load_csv, save_csv
from .errors import ConfigError, FairThreshError, InputError

log = logging.getLogger("fairthresh")

DEFAULT_LAMBDAS = ",".join(f"{v:g}" for v in np.logspace(-2, 7, 5))


# --- output helpers ---------------------------------------------------------

def _round(obj):
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.12g}")
    return obj


def dumps(doc) -> str:
    return json.dumps(_round(doc), indent=2) + "\n"


def _emit(doc, out):
    text = dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _report_doc(report: metrics.MetricReport) -> dict:
    doc = report.to_dict()
    for name in metrics.METRICS:
        if doc[name] is None:
            doc[name] = "n/a"
    return doc


# --- shared argument groups -------------------------------------------------

def _families(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return tuple(density.canonical_family(n) for n in names)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_fit_args(p):
    p.add_argument("--families", type=_families, default=density.PARAMETRIC,
                   help="candidate density families, comma separated (default: %(default)s)")
    p.add_argument("--num-bins", type=int, default=None, help="KDE histogram bins (default: sqrt rule)")
    p.add_argument("--kernel-sd", type=float, default=density.DEFAULT_KERNEL_SD, help="KDE kernel sd")


def _add_source_args(p, eval_flag=True):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="labeled logits CSV (logit,label,group)")
    src.add_argument("--densities", help="fitted densities JSON from `fit` (no raw data needed)")
    _add_fit_args(p)
    if eval_flag:
        p.add_argument("--eval", help="labeled CSV for metric evaluation")


def _add_objective_args(p):
    p.add_argument("--constraints", default="EOd", help="e.g. EOd or DP+EOd (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="shared fairness weight")
    p.add_argument("--spec", help="objective spec JSON file (per-constraint lambdas)")
    p.add_argument("--unified", action="store_true", help="one threshold shared by both groups")
    p.add_argument("--max-iter", type=int, default=optimizer.OptimizeOptions.max_iter)
    p.add_argument("--tol", type=float, default=optimizer.OptimizeOptions.tol)
    p.add_argument("--cut-factor", type=float, default=optimizer.OptimizeOptions.cut_factor)
    p.add_argument("--max-cuts", type=int, default=optimizer.OptimizeOptions.max_cuts)
    p.add_argument("--init", type=_float_list, default=[0.0, 0.0], help="theta0,theta1 start")
    p.add_argument("--no-extrapolate", action="store_true", help="disable pattern moves")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairthresh", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with option values; flags override it")
        p.add_argument("--out", help="output path (default: stdout)")
        return p

    p = add("fit", "fit per-cell logit densities")
    p.add_argument("--input", help="labeled logits CSV")
    _add_fit_args(p)

    p = add("optimize", "solve for group thresholds")
    _add_source_args(p)
    _add_objective_args(p)

    p = add("sweep", "optimize over a list of lambdas and export the frontier")
    _add_source_args(p)
    _add_objective_args(p)
    p.add_argument("--lambdas", type=_float_list, default=_float_list(DEFAULT_LAMBDAS))
    p.add_argument("--warm-start", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--csv", help="also write the frontier as CSV")
    p.add_argument("--fairness-metric", default="eod_diff", choices=metrics.METRICS)

    p = add("evaluate", "fairness and accuracy metrics for thresholds or predictions")
    p.add_argument("--input", help="labeled logits CSV")
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--theta1", type=float, default=0.0)
    p.add_argument("--predictions", help="CSV with a 0/1 `prediction` column aligned with --input rows")

    p = add("bounds", "check the rate-gap bounds empirically")
    _add_source_args(p, eval_flag=False)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=1000)

    p = add("synth", "generate the synthetic mixture benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--mixture", help="mixture config JSON (default: benchmark table)")
    p.add_argument("--sidecar", help="sidecar JSON path (default: <out>.json)")
    p.add_argument("--splits", help="directory for train/val/test CSVs")
    return parser


# --- config file ------------------------------------------------------------

def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when given."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_").lstrip("_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in actions or dest in ("help", "config"):
            raise ConfigError(f"unknown option {key!r} in config for `{args.command}`")
        action = actions[dest]
        if action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        elif dest in ("families",) and isinstance(value, list):
            value = _families(",".join(value))
        elif dest in ("lambdas", "init") and isinstance(value, list):
            value = [float(v) for v in value]
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- command implementations ------------------------------------------------

def _need(args, name):
    value = getattr(args, name, None)
    if not value:
        raise InputError(f"--{name.replace('_', '-')} is required")
    return value


def _load_data(path) -> GroupedLogits:
    if not Path(path).exists():
        raise InputError(f"input file not found: {path}")
    return load_csv(path)


def _load_bundle(args):
    """Bundle plus the raw data it came from (None in density-only mode)."""
    if getattr(args, "densities", None):
        path = Path(args.densities)
        if not path.exists():
            raise InputError(f"densities file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"densities file is not valid JSON: {exc}") from None
        return objective.DensityBundle.from_dict(doc), None
    data = _load_data(_need(args, "input"))
    bundle = objective.fit_bundle(data, families=args.families, num_bins=args.num_bins,
                                  kernel_sd=args.kernel_sd)
    return bundle, data


def _spec(args, lam=None) -> objective.ObjectiveSpec:
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise InputError(f"spec file not found: {path}")
        spec = objective.ObjectiveSpec.from_json(path.read_text(encoding="utf-8"))
        return spec if lam is None else spec.with_lambda(lam)
    return objective.ObjectiveSpec.parse(args.constraints, args.lam if lam is None else lam)


def _opts(args) -> optimizer.OptimizeOptions:
    if len(args.init) != 2:
        raise ConfigError("--init takes exactly two values: theta0,theta1")
    return optimizer.OptimizeOptions(max_iter=args.max_iter, tol=args.tol, cut_factor=args.cut_factor,
                                     max_cuts=args.max_cuts, init=tuple(args.init),
                                     extrapolate=not args.no_extrapolate)


def cmd_fit(args):
    data = _load_data(_need(args, "input"))
    bundle = objective.fit_bundle(data, families=args.families, num_bins=args.num_bins,
                                  kernel_sd=args.kernel_sd)
    doc = bundle.to_dict()
    doc["families"] = list(args.families)
    return doc


def cmd_optimize(args):
    bundle, data = _load_bundle(args)
    spec = _spec(args)
    run = optimizer.optimize_unified if args.unified else optimizer.optimize
    res = run(bundle, spec, _opts(args))
    doc = {
        "objective": spec.to_dict(),
        "theta": res.theta.to_dict(),
        "unified": res.unified,
        "converged": res.converged,
        "stall_reason": res.stall_reason,
        "iterations": res.iterations,
        "loss": objective.loss_breakdown(bundle, res.theta, spec),
        "baseline_loss": objective.loss_breakdown(bundle, (0.0, 0.0), spec),
    }
    if args.eval:
        eval_data = _load_data(args.eval)
        doc["report"] = _report_doc(metrics.evaluate_thresholds(eval_data, res.theta, strict=False))
        doc["baseline_report"] = _report_doc(
            metrics.evaluate_thresholds(eval_data, (0.0, 0.0), strict=False))
    return doc


def cmd_sweep(args):
    bundle, data = _load_bundle(args)
    eval_data = _load_data(args.eval) if args.eval else data
    if not args.lambdas:
        raise ConfigError("--lambdas must list at least one value")
    template = _spec(args, lam=1.0)
    points = analysis.sweep_lambda(bundle, template, args.lambdas, eval_data=eval_data, opts=_opts(args),
                                   unified=args.unified, warm_start=args.warm_start, workers=args.workers)
    front = set()
    if eval_data is not None:
        front = {id(p) for p in analysis.pareto_front(points, fairness=args.fairness_metric)}
    rows = []
    for p in points:
        row = p.to_dict()
        row["report"] = _report_doc(p.report) if p.report else None
        row["pareto"] = id(p) in front
        rows.append(row)
    if args.csv:
        analysis.write_frontier_csv(points, args.csv)
    return rows


def cmd_evaluate(args):
    data = _load_data(_need(args, "input"))
    if args.predictions:
        pred = _read_predictions(args.predictions, len(data))
        report = metrics.evaluate(data.labels, data.groups, pred, strict=False)
        doc = {"predictions": args.predictions}
    else:
        theta = objective.ThresholdPair(args.theta0, args.theta1)
        report = metrics.evaluate_thresholds(data, theta, strict=False)
        doc = {"theta": theta.to_dict()}
    doc["report"] = _report_doc(report)
    return doc


def _read_predictions(path, n):
    if not Path(path).exists():
        raise InputError(f"predictions file not found: {path}")
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "prediction" not in reader.fieldnames:
            raise InputError(f"{path}: missing `prediction` column")
        values = []
        for line, row in enumerate(reader, start=2):
            v = row["prediction"].strip()
            if v not in ("0", "1"):
                raise InputError(f"{path}:{line}: prediction must be 0 or 1, got {v!r}")
            values.append(int(v))
    if len(values) != n:
        raise InputError(f"{path}: {len(values)} predictions for {n} rows")
    return np.asarray(values)


def cmd_bounds(args):
    bundle, _ = _load_bundle(args)
    constants = analysis.estimate_bound_constants(bundle, args.grid_size)
    report = analysis.verify_gap_bound(bundle, constants, num_trials=args.trials, seed=args.seed)
    return {"constants": constants.to_dict(), **report.to_dict()}


def cmd_synth(args):
    out = _need(args, "out")
    if args.mixture:
        path = Path(args.mixture)
        if not path.exists():
            raise InputError(f"mixture config not found: {path}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        doc.setdefault("seed", args.seed)
        doc.setdefault("noise_sd", args.noise_sd)
        config = synth.MixtureConfig.from_dict(doc)
    else:
        config = synth.paper_config(seed=args.seed, noise_sd=args.noise_sd)
    ds = synth.generate(config)
    save_csv(ds.data, out)
    sidecar = args.sidecar or f"{out}.json"
    synth.write_sidecar(ds, sidecar)
    written = {"data": str(out), "sidecar": str(sidecar)}
    if args.splits:
        folder = Path(args.splits)
        folder.mkdir(parents=True, exist_ok=True)
        for name in ds.splits:
            target = folder / f"{name}.csv"
            save_csv(ds.split(name), target)
            written[name] = str(target)
    return {"written": written, "counts": ds.data.counts_json()["n"],
            "splits": {k: len(v) for k, v in ds.splits.items()}}


COMMANDS = {"fit": cmd_fit, "optimize": cmd_optimize, "sweep": cmd_sweep, "evaluate": cmd_evaluate,
            "bounds": cmd_bounds, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        doc = COMMANDS[args.command](args)
        if args.command == "synth":
            sys.stdout.write(dumps(doc))
        else:
            _emit(doc, args.out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FairThreshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
