"""Command-line interface: ``sdid-event estimate`` and ``sdid-event generate``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .dgp import DGPSpec, generate, panel_to_csv
from .errors import InferenceError, InvalidSpec, PanelError, SolverError
from .estimators import PLACEBO_CENTERING, EstimateOptions, EstimationResult, estimate
from .inference import (
    DEFAULT_LEVEL,
    DEFAULT_REPS,
    VarianceResult,
    bootstrap_se,
    confidence_interval,
    placebo_se,
)
from .panel import PanelDataset, load_panel
from .weights import SolverOptions

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _num(x):
    """JSON-safe float: NaN becomes null."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _row(label, ell, est, se, level, n, cohort=None):
    if se is None or math.isnan(se):
        lo = hi = None
        se = None
    else:
        lo, hi = confidence_interval(est, se, level)
    return {
        "label": label,
        "cohort": cohort,
        "ell": ell,
        "estimate": _num(est),
        "se": _num(se),
        "ci_lower": _num(lo),
        "ci_upper": _num(hi),
        "n": n,
    }


def _placebo_ells(result: EstimationResult, placebo):
    available = sorted(result.placebo, reverse=True)
    if placebo is None:
        return []
    if placebo == "all":
        return available
    return available[:placebo]


def build_report(
    panel: PanelDataset,
    result: EstimationResult,
    variance: VarianceResult,
    placebo=None,
    disag: bool = False,
) -> dict:
    """Everything the CLI prints, as one JSON-serialisable value.

    Text and CSV renderings are produced from this dictionary, so the three
    output formats always carry identical numbers.
    """
    s = result.structure
    level = variance.ci_level
    rows = [_row("ATT", None, result.att, variance.se_att, level, s.n_treated)]
    for ell, eff in result.event.items():
        rows.append(_row(f"Effect_{ell}", ell, eff.estimate, variance.se_by_ell.get(ell), level, eff.n_treated))
    for ell in _placebo_ells(result, placebo):
        eff = result.placebo[ell]
        rows.append(_row(f"Placebo_{ell}", ell, eff.estimate, variance.se_placebo.get(ell), level, eff.n_treated))

    cohorts = []
    for c in result.cohorts:
        w = c.weights
        controls = [panel.unit_labels[i] for i in s.control_indices]
        cohorts.append(
            {
                "cohort": panel.time_label(c.cohort),
                "n_treated": c.n_treated,
                "horizon": c.horizon,
                "tau": c.tau,
                "dynamic": {str(ell): v for ell, v in c.dynamic.items()},
                "placebo": {str(ell): v for ell, v in c.placebo.items()},
                "weights": {
                    "omega": dict(zip(controls, map(float, w.omega))),
                    "omega_intercept": w.omega_intercept,
                    "lambda": {str(panel.time_label(t + 1)): float(x) for t, x in enumerate(w.lambda_)},
                    "lambda_intercept": w.lambda_intercept,
                    "zeta": w.zeta,
                    "zeta_time": w.zeta_time,
                    "diagnostics": {
                        "unit": vars(w.diagnostics.unit),
                        "time": vars(w.diagnostics.time),
                        "zeta_degenerate": w.diagnostics.zeta_degenerate,
                    },
                },
            }
        )
    return {
        "att": result.att,
        "table": rows,
        "disag": disag,
        "cohorts": cohorts,
        "structure": {
            "n_units": panel.n_units,
            "n_controls": s.n_controls,
            "n_treated": s.n_treated,
            "periods": [panel.time_labels[0], panel.time_labels[-1]],
            "adoption_dates": [panel.time_label(a) for a in s.adoption_dates],
            "t_post": s.t_post,
            "t_tr": s.t_tr,
            "n_tr_by_ell": {str(k): v for k, v in s.n_tr_by_ell.items()},
        },
        "variance": {
            "method": variance.method,
            "reps": variance.reps,
            "seed": variance.seed,
            "se_att": _num(variance.se_att),
            "se_by_ell": {str(k): _num(v) for k, v in variance.se_by_ell.items()},
            "se_placebo": {str(k): _num(v) for k, v in variance.se_placebo.items()},
            "ci_level": variance.ci_level,
            "failed_reps": variance.failed_reps,
        },
        "metadata": {
            "version": __version__,
            "event_time": "Effect_1 is the adoption period",
            "placebo_centering": PLACEBO_CENTERING,
            "converged": result.converged,
        },
    }


def _g(x):
    return "" if x is None else f"{x:.6g}"


def _table(header, rows, first_width):
    widths = [max(first_width, *(len(r[0]) for r in rows))] + [
        max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header[1:], start=1)
    ]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def render_text(report: dict) -> str:
    st = report["structure"]
    var = report["variance"]
    out = [
        "Synthetic difference-in-differences event study",
        f"Units: {st['n_units']} ({st['n_controls']} never treated, {st['n_treated']} treated "
        f"in {len(st['adoption_dates'])} cohort(s)); periods {st['periods'][0]}-{st['periods'][1]}",
    ]
    if var["method"] == "none":
        out.append("Inference: none")
    else:
        out.append(
            f"Inference: {var['method']}, {var['reps']} replications, seed {var['seed']}, "
            f"{100 * var['ci_level']:g}% CI"
        )
    out.append("")
    header = ["", "Estimate", "SE", "CI lower", "CI upper", "N"]
    rows = [
        [r["label"], _g(r["estimate"]), _g(r["se"]), _g(r["ci_lower"]), _g(r["ci_upper"]), str(r["n"])]
        for r in report["table"]
    ]
    out.append(_table(header, rows, 10))
    if report["disag"]:
        horizon = max(c["horizon"] for c in report["cohorts"])
        header = ["Cohort", "N", "T_tr", "Tau"] + [f"Effect_{ell}" for ell in range(1, horizon + 1)]
        rows = []
        for c in report["cohorts"]:
            effects = [_g(c["dynamic"].get(str(ell))) for ell in range(1, horizon + 1)]
            rows.append([str(c["cohort"]), str(c["n_treated"]), str(c["horizon"]), _g(c["tau"])] + effects)
        out.extend(["", "Cohort-specific effects", _table(header, rows, 6)])
    if not report["metadata"]["converged"]:
        out.extend(["", "WARNING: weight solver did not converge for at least one cohort"])
    return "\n".join(out) + "\n"


CSV_FIELDS = ["table", "label", "cohort", "ell", "estimate", "se", "ci_lower", "ci_upper", "n"]


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    fmt = lambda x: "" if x is None else repr(x)  # noqa: E731
    for r in report["table"]:
        writer.writerow(
            ["event", r["label"], "", fmt(r["ell"]), fmt(r["estimate"]), fmt(r["se"]),
             fmt(r["ci_lower"]), fmt(r["ci_upper"]), r["n"]]
        )
    if report["disag"]:
        for c in report["cohorts"]:
            writer.writerow(["cohort", "Tau", c["cohort"], "", fmt(c["tau"]), "", "", "", c["n_treated"]])
            for ell, v in c["dynamic"].items():
                writer.writerow(["cohort", f"Effect_{ell}", c["cohort"], ell, fmt(v), "", "", "", c["n_treated"]])
    return buf.getvalue()


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_weights(path, report: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cohort", "kind", "label", "weight"])
        for c in report["cohorts"]:
            w = c["weights"]
            for label, x in w["omega"].items():
                writer.writerow([c["cohort"], "omega", label, repr(x)])
            writer.writerow([c["cohort"], "omega_intercept", "", repr(w["omega_intercept"])])
            for label, x in w["lambda"].items():
                writer.writerow([c["cohort"], "lambda", label, repr(x)])
            writer.writerow([c["cohort"], "lambda_intercept", "", repr(w["lambda_intercept"])])
            writer.writerow([c["cohort"], "zeta", "", repr(w["zeta"])])


def _placebo_arg(text):
    if text == "all":
        return "all"
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'all' or a positive integer") from None
    if k < 1:
        raise argparse.ArgumentTypeError("expected 'all' or a positive integer")
    return k


def _level_arg(text):
    x = float(text)
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError("level must lie strictly between 0 and 1")
    return x


def _cohort_arg(text):
    try:
        a, n = text.split(":")
        return int(a), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("expected PERIOD:SIZE, e.g. 5:3") from None


def _floats_arg(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdid-event", description="Event-study synthetic difference-in-differences.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate ATT and event-study effects from a long CSV panel")
    est.add_argument("--input", required=True, help="long-format CSV, one row per unit and period")
    est.add_argument("--unit", default="unit")
    est.add_argument("--time", default="time")
    est.add_argument("--outcome", default="outcome")
    est.add_argument("--treatment", default="treatment")
    est.add_argument("--disag", action="store_true", help="also report cohort-specific effects")
    est.add_argument("--placebo", type=_placebo_arg, default=None, metavar="{all|K}",
                     help="report pre-treatment placebo effects (all, or the K closest to adoption)")
    est.add_argument("--vce", choices=["bootstrap", "placebo", "none"], default="bootstrap")
    est.add_argument("--brep", type=int, default=DEFAULT_REPS, help="resampling replications")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--level", type=_level_arg, default=DEFAULT_LEVEL)
    est.add_argument("--jobs", type=int, default=1, help="worker processes for resampling")
    est.add_argument("--tol", type=float, default=SolverOptions.tolerance)
    est.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)
    est.add_argument("--uniform-weights", action="store_true",
                     help="skip weight fitting and use flat weights (plain DiD)")
    est.add_argument("--dump-weights", metavar="PATH", help="write fitted weights to a CSV file")
    est.add_argument("--format", choices=["text", "json", "csv"], default="text")
    est.add_argument("--output", metavar="PATH", help="write results here instead of stdout")

    gen = sub.add_parser("generate", help="write a synthetic panel and a JSON file of its true effects")
    gen.add_argument("--output", required=True, metavar="PATH")
    gen.add_argument("--truth", metavar="PATH", help="true-effects JSON (default: <output>.truth.json)")
    gen.add_argument("--controls", type=int, required=True)
    gen.add_argument("--cohort", type=_cohort_arg, action="append", required=True, metavar="PERIOD:SIZE")
    gen.add_argument("--periods", type=int, required=True)
    gen.add_argument("--effects", type=_floats_arg, default=[], help="dynamic effects for ell=1,2,...")
    gen.add_argument("--unit-sd", type=float, default=1.0)
    gen.add_argument("--time-sd", type=float, default=1.0)
    gen.add_argument("--noise-sd", type=float, default=1.0)
    gen.add_argument("--factor-sd", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    return parser


def _emit(text: str, path, stdout) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _cmd_estimate(args, stdout, stderr) -> int:
    if args.brep < 2 and args.vce != "none":
        raise UsageError("--brep must be at least 2")
    if args.tol <= 0 or args.max_iter < 1:
        raise UsageError("--tol must be positive and --max-iter at least 1")
    try:
        with open(args.input, "rb") as fh:
            panel = load_panel(fh, args.unit, args.time, args.outcome, args.treatment)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None

    options = EstimateOptions(SolverOptions(args.tol, args.max_iter), args.uniform_weights)
    result = estimate(panel, options)
    common = dict(options=options, reps=args.brep, seed=args.seed, level=args.level,
                  n_jobs=args.jobs, result=result)
    if args.vce == "bootstrap":
        variance = bootstrap_se(panel, **common)
    elif args.vce == "placebo":
        variance = placebo_se(panel, **common)
    else:
        variance = VarianceResult.none(args.level)

    report = build_report(panel, result, variance, args.placebo, args.disag)
    render = {"text": render_text, "json": render_json, "csv": render_csv}[args.format]
    _emit(render(report), args.output, stdout)
    if args.dump_weights:
        write_weights(args.dump_weights, report)
    if not result.converged:
        print("error: weight solver reached --max-iter before convergence", file=stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_generate(args, stdout, stderr) -> int:
    first = 1
    spec = DGPSpec(
        n_controls=args.controls,
        cohorts={a - first + 1: n for a, n in args.cohort},
        n_periods=args.periods,
        effects=tuple(args.effects),
        unit_sd=args.unit_sd,
        time_sd=args.time_sd,
        noise_sd=args.noise_sd,
        factor_sd=args.factor_sd,
        seed=args.seed,
        first_period=first,
    )
    panel, truth = generate(spec)
    out = Path(args.output)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    out.write_text(panel_to_csv(panel), newline="")
    truth_path.write_text(json.dumps(truth.to_dict(), indent=2) + "\n")
    print(f"wrote {out} and {truth_path}", file=stderr)
    return EXIT_OK


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "estimate":
            return _cmd_estimate(args, stdout, stderr)
        return _cmd_generate(args, stdout, stderr)
    except UsageError as exc:
        print(str(exc), file=stderr)
        return EXIT_USAGE
    except (PanelError, InferenceError, InvalidSpec) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver error: {exc}", file=stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())
