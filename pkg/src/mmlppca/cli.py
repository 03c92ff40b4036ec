"""Command-line client: fit, select, and the two simulation suites.

This is a thin wrapper over the service handlers; all validation and
computation live there, so the HTTP surface and the command line cannot
drift apart.  CSV goes in, JSON or CSV comes out.

Exit codes: 0 success, 2 input or config error, 3 model-domain error.
A fit whose codelength polynomial has no admissible root exits 3 but still
prints the full rank-0 fallback report, so scripted callers can either
stop on the code or consume the substitute fit.
"""

import argparse
import csv
import io
import json
import os
import sys

from pydantic import ValidationError

from .errors import InvalidData, InvalidParameter, MmlPcaError
from .service import (
    SCHEMA_VERSION,
    FitRequest,
    SelectRequest,
    SimulateRequest,
    handle_fit,
    handle_select,
    handle_simulate,
)
from .simlab import DEFAULT_SEED

__all__ = ["main"]


# ===== Output helpers =====


def _json_text(document):
    return json.dumps(document, indent=2, allow_nan=False) + "\n"


def _write_text(text, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_csv_text(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidData(f"cannot read CSV: {exc}") from exc
    if "\n" not in text:
        text += "\n"  # single-line files must still parse as text, not a path
    return text


def _f(value, places=6):
    return f"{value:.{places}f}"


def _estimate_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "K", "J", "estimator", "S1", "S2", "KL", "se_S1", "se_S2", "se_KL"])
    for row in rows:
        cfg = row["config"]
        for name, agg in row["estimates"].items():
            writer.writerow(
                [
                    cfg["N"],
                    cfg["K"],
                    cfg["J"],
                    name,
                    _f(agg["s1"]),
                    _f(agg["s2"]),
                    _f(agg["kl"]),
                    _f(agg["se_s1"]),
                    _f(agg["se_s2"]),
                    _f(agg["se_kl"]),
                ]
            )
    return buf.getvalue()


def _select_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "J", "criterion", "KL", "pct_below", "pct_equal", "pct_above"])
    for row in rows:
        cfg = row["config"]
        for name, agg in row["selections"].items():
            # No candidate sits below the smallest factor rank, so a zero
            # count at true rank 1 is structural and printed as a dash.
            below = (
                "-"
                if cfg["J"] == 1 and agg["counts"]["below"] == 0
                else _f(100.0 * agg["rate_below"], 2)
            )
            writer.writerow(
                [
                    cfg["N"],
                    cfg["J"],
                    name,
                    _f(agg["kl"], 4),
                    below,
                    _f(100.0 * agg["rate_equal"], 2),
                    _f(100.0 * agg["rate_above"], 2),
                ]
            )
    return buf.getvalue()


def _estimate_summary(row):
    cfg = row["config"]
    parts = [f"N={cfg['N']} K={cfg['K']} J={cfg['J']} reps={row['replications']}"]
    for name, agg in row["estimates"].items():
        cell = f"{name}: S1={agg['s1']:.4f} S2={agg['s2']:.4f} KL={agg['kl']:.4f}"
        if agg["fallbacks"]:
            cell += f" (fallbacks={agg['fallbacks']})"
        parts.append(cell)
    return " | ".join(parts)


def _select_summary(row):
    cfg = row["config"]
    parts = [f"N={cfg['N']} K={cfg['K']} J={cfg['J']} reps={row['replications']}"]
    for name, agg in row["selections"].items():
        parts.append(
            f"{name}: <J={100 * agg['rate_below']:.2f}% =J={100 * agg['rate_equal']:.2f}% "
            f">J={100 * agg['rate_above']:.2f}% KL={agg['kl']:.4f}"
        )
    return " | ".join(parts)


# ===== Commands =====


def _cmd_fit(args):
    request = FitRequest(
        csv_text=_read_csv_text(args.input),
        rank=args.rank,
        estimator=args.estimator,
    )
    report = handle_fit(request)
    text = _json_text(report.model_dump())
    if args.output:
        _write_text(text, args.output)
    else:
        sys.stdout.write(text)
    return 3 if report.status == "fallback" else 0


def _cmd_select(args):
    request = SelectRequest(
        csv_text=_read_csv_text(args.input),
        criterion=args.criterion,
    )
    report = handle_select(request)
    text = _json_text(report.model_dump())
    if args.output:
        _write_text(text, args.output)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_simulate(args, suite):
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config_text = fh.read()
    except OSError as exc:
        raise InvalidData(f"cannot read config: {exc}") from exc
    request = SimulateRequest(
        suite=suite,
        config_text=config_text,
        seed=args.seed,
        replications=args.replications,
    )
    report = handle_simulate(request)
    rows = report.rows

    make_csv = _estimate_csv if suite == "estimate" else _select_csv
    summary = _estimate_summary if suite == "estimate" else _select_summary
    json_doc = _json_text(report.model_dump())

    if args.output:
        base, ext = os.path.splitext(args.output)
        if ext.lower() in {".csv", ".json"}:
            args.output = base
        _write_text(make_csv(rows), args.output + ".csv")
        _write_text(json_doc, args.output + ".json")
        for row in rows:
            print(summary(row))
    else:
        # Data on stdout, progress on stderr, so pipes stay clean.
        for row in rows:
            print(summary(row), file=sys.stderr)
        sys.stdout.write(json_doc if args.format == "json" else make_csv(rows))
    return 0


# ===== Argument parsing =====


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mmlppca",
        description=(
            "Rank selection and residual-variance estimation for probabilistic "
            "PCA by two-part codelength, with BIC and Laplace-evidence "
            "comparators and a seeded simulation harness."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model at a fixed rank; JSON report on stdout")
    fit.add_argument("input", help="CSV file, rows = observations")
    fit.add_argument("--rank", type=int, required=True, help="number of components")
    fit.add_argument("--estimator", choices=["ml", "mml"], default="mml")
    fit.add_argument("--output", help="write the JSON report here instead of stdout")
    fit.set_defaults(func=_cmd_fit)

    select = sub.add_parser("select", help="score all candidate ranks; JSON report on stdout")
    select.add_argument("input", help="CSV file, rows = observations")
    select.add_argument("--criterion", choices=["mml", "bic", "laplace", "all"], default="all")
    select.add_argument("--output", help="write the JSON report here instead of stdout")
    select.set_defaults(func=_cmd_select)

    for name, suite in (("sim-estimate", "estimate"), ("sim-select", "select")):
        sim = sub.add_parser(name, help=f"run the {suite} suite from a YAML config")
        sim.add_argument("config", help="YAML experiment config")
        sim.add_argument(
            "--seed",
            type=int,
            default=None,
            help=f"override the config seed (config default: {DEFAULT_SEED:#x})",
        )
        sim.add_argument(
            "--replications", type=int, default=None, help="override every row's replication count"
        )
        sim.add_argument(
            "--output",
            help="basename; writes <output>.csv and <output>.json and prints row summaries",
        )
        sim.add_argument(
            "--format",
            choices=["json", "csv"],
            default="csv",
            help="stdout format when --output is not given",
        )
        sim.set_defaults(func=_cmd_simulate, suite=suite)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("sim-estimate", "sim-select"):
            return _cmd_simulate(args, args.suite)
        return args.func(args)
    except (InvalidData, InvalidParameter, ValidationError) as exc:
        print(f"mmlppca: error: {exc}", file=sys.stderr)
        return 2
    except MmlPcaError as exc:
        sys.stdout.write(
            _json_text(
                {
                    "schema_version": SCHEMA_VERSION,
                    "error": {"type": type(exc).__name__, "reason": str(exc)},
                }
            )
        )
        print(f"mmlppca: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
