"""Command-line entry point.

Subcommands::

    nestmc estimate  one estimate, printed as JSON
    nestmc bench     replicated MSE sweep, written as CSV + JSON
    nestmc diagnose  partition width diagnostics as CSV
    nestmc plot      log-log SVG chart from a summary CSV

Settings come from built-in defaults, then an optional JSON file (``--config``),
then command-line flags; later sources win. The master seed defaults to the
``NESTMC_SEED`` environment variable when set.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 a width bound
was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

from .errors import NestMCError
from .harness import (
    METHODS,
    ExperimentConfig,
    ReferenceSpec,
    cell_index,
    run_experiment,
    run_method,
)
from .partition import build_partitions, rank_transform, width_diagnostic
from .plotting import Series, render_svg
from .problems import SCENARIOS, Problem1Spec, Problem2Spec, build_problem
from .sampling import make_stream, substream

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_BOUND = 0, 2, 3, 4

ESTIMATE_COLUMNS = ("problem", "scenario", "method", "m", "N", "replication", "estimate", "seed_path")
SUMMARY_COLUMNS = ("problem", "scenario", "method", "m", "N", "mse", "mse_stderr",
                   "truth_or_ref", "ref_stderr", "slope")
DIAGNOSE_COLUMNS = ("d", "k", "W_dk", "lemma_lhs", "lemma_rhs", "satisfied")

DEFAULTS = {
    "problem": "p1",
    "M": 7,
    "p": 0.7,
    "scenario": "EvSvG",
    "n": 1000.0,
    "s": 3.7,
    "method": "sparse_grid",
    "methods": ["sparse_grid", "simple"],
    "m": 10,
    "m_values": list(range(8, 17)),
    "r": 100,
    "seed": 0,
    "threads": 1,
    "reference": None,  # analytic for p1, nested_mc for p2
    "ref_outer": 100_000,
    "ref_inner": 1000,
    "control_variates": True,
    "out_dir": ".",
    "out": None,
}

# keys each subcommand accepts from a config file
KEYS = {
    "estimate": {"problem", "M", "p", "scenario", "n", "s", "method", "m", "seed"},
    "bench": {"problem", "M", "p", "scenario", "n", "s", "methods", "m_values", "r", "seed", "threads",
              "reference", "ref_outer", "ref_inner", "control_variates", "out_dir"},
    "diagnose": {"problem", "M", "p", "scenario", "n", "s", "m", "seed", "out"},
}


class ConfigError(Exception):
    pass


def fmt(x) -> str:
    """Round-trip exact text for CSV cells."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


# ---------------------------------------------------------------------------
# value checking


def _int(key, v, lo=None, what="an integer"):
    if isinstance(v, bool):
        raise ConfigError(f"{key} must be {what}")
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if isinstance(v, str):
        try:
            v = int(v)
        except ValueError:
            raise ConfigError(f"{key} must be {what}") from None
    if not isinstance(v, int) or (lo is not None and v < lo):
        raise ConfigError(f"{key} must be {what}")
    return v


def _float(key, v):
    if isinstance(v, bool):
        raise ConfigError(f"{key} must be a number")
    try:
        out = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key} must be finite")
    return out


def parse_m_values(v) -> list:
    """Depth list from a JSON list, 'a..b' (inclusive) or 'a,b,c'."""
    what = "a nonempty list of nonnegative integers"
    if isinstance(v, str):
        text = v.strip()
        if ".." in text:
            lo, _, hi = text.partition("..")
            lo, hi = _int("m_values", lo.strip(), 0, what), _int("m_values", hi.strip(), 0, what)
            v = list(range(lo, hi + 1))
        else:
            v = [part.strip() for part in text.split(",") if part.strip()]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"m_values must be {what}")
    return [_int("m_values", x, 0, what) for x in v]


def parse_methods(v) -> list:
    if isinstance(v, str):
        v = [part.strip() for part in v.split(",") if part.strip()]
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError("methods must be a nonempty list")
    for method in v:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return list(v)


def normalise(key, v):
    if key in ("M",):
        return _int(key, v, 1, "a positive integer")
    if key in ("m",):
        return _int(key, v, 0, "a nonnegative integer")
    if key in ("r", "threads", "ref_outer"):
        return _int(key, v, 1, "a positive integer")
    if key == "seed":
        return _int(key, v, None, "an integer")
    if key == "ref_inner":
        if v is None or v == "exact":
            return None
        return _int(key, v, 1, "a positive integer or 'exact'")
    if key in ("p", "n", "s"):
        return _float(key, v)
    if key == "problem":
        if v not in ("p1", "p2"):
            raise ConfigError("problem must be 'p1' or 'p2'")
        return v
    if key == "scenario":
        if v not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}")
        return v
    if key == "method":
        if v not in METHODS:
            raise ConfigError(f"unknown method {v!r}; choose from {', '.join(METHODS)}")
        return v
    if key == "methods":
        return parse_methods(v)
    if key == "m_values":
        return parse_m_values(v)
    if key == "reference":
        if v not in (None, "analytic", "nested_mc"):
            raise ConfigError("reference must be 'analytic' or 'nested_mc'")
        return v
    if key == "control_variates":
        if not isinstance(v, bool):
            raise ConfigError("control_variates must be true or false")
        return v
    if key in ("out_dir", "out"):
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"{key} must be a path")
        return v
    raise ConfigError(f"unknown key {key!r}")


def resolve_settings(command: str, flags: dict, config_path=None, environ=None) -> dict:
    """Merge defaults, the JSON config file and flags, in that order of priority.

    ``flags`` holds only options actually given on the command line.
    """
    environ = os.environ if environ is None else environ
    allowed = KEYS[command]
    out = {k: DEFAULTS[k] for k in allowed}
    if environ.get("NESTMC_SEED") not in (None, ""):
        out["seed"] = normalise("seed", environ["NESTMC_SEED"])
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        out.update({k: normalise(k, v) for k, v in data.items()})
    for k, v in flags.items():
        if k not in allowed:
            raise ConfigError(f"option --{k} does not apply to {command}")
        out[k] = normalise(k, v)
    return out


def problem_spec(settings: dict):
    try:
        if settings["problem"] == "p1":
            return Problem1Spec(settings["M"], settings["p"])
        return Problem2Spec(settings["scenario"], settings["n"], settings["s"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_estimate(settings: dict, stdout=None) -> int:
    stdout = stdout or sys.stdout
    problem = build_problem(problem_spec(settings))
    method, m, seed = settings["method"], settings["m"], settings["seed"]
    # same substream as replication 0 of a bench cell
    rng = substream(make_stream(seed), cell_index(method, m, 0))
    rec = run_method(problem, method, m, rng)
    payload = {
        "method": method,
        "m": m,
        "N": 1 << m,
        "estimate": rec.value,
        "samples_used": rec.samples_used,
        "f_evals": rec.f_evals,
        "seed": seed,
    }
    stdout.write(json.dumps(payload) + "\n")
    return EXIT_OK


def experiment_config(settings: dict) -> ExperimentConfig:
    spec = problem_spec(settings)
    kind = settings["reference"] or ("analytic" if settings["problem"] == "p1" else "nested_mc")
    try:
        return ExperimentConfig(
            problem=spec,
            methods=tuple(settings["methods"]),
            m_values=tuple(settings["m_values"]),
            r=settings["r"],
            master_seed=settings["seed"],
            reference=ReferenceSpec(kind, settings["ref_outer"], settings["ref_inner"],
                                    settings["control_variates"]),
            threads=settings["threads"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def bench_tables(report) -> tuple:
    """Estimates CSV text and summary CSV text for a run report."""
    est_rows, sum_rows = [], []
    for c in report.cells:
        for i, (value, path) in enumerate(zip(c.estimates, c.seed_paths)):
            est_rows.append((report.problem, report.scenario, c.method, c.m, c.n, i, float(value),
                             "/".join(str(p) for p in path)))
        sum_rows.append((report.problem, report.scenario, c.method, c.m, c.n, float(c.mse), float(c.mse_stderr),
                         float(report.truth_or_reference), float(report.reference_stderr),
                         float(report.slopes[c.method])))
    return _csv_text(ESTIMATE_COLUMNS, est_rows), _csv_text(SUMMARY_COLUMNS, sum_rows)


def cmd_bench(settings: dict) -> int:
    report = run_experiment(experiment_config(settings))
    est_text, sum_text = bench_tables(report)
    out_dir = Path(settings["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "estimates.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(est_text)
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(sum_text)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_json_safe(report.to_dict()), fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def diagnose_rows(settings: dict) -> list:
    problem = build_problem(problem_spec(settings))
    m = settings["m"]
    rng = substream(make_stream(settings["seed"]), cell_index("diagnose", m))
    batch = problem.sample_joint(1 << m, rng)
    plan = build_partitions(batch)
    t = rank_transform(batch.y)
    rows = []
    for d in range(m + 1):
        diag = width_diagnostic(batch, plan, d, t)
        for k in range(batch.k_dim):
            rows.append((d, k, float(diag.w_per_dim[k]), diag.lemma_lhs, diag.lemma_rhs, diag.satisfied))
    return rows


def cmd_diagnose(settings: dict, stdout=None) -> int:
    rows = diagnose_rows(settings)
    text = _csv_text(DIAGNOSE_COLUMNS, rows)
    if settings["out"]:
        with open(settings["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        (stdout or sys.stdout).write(text)
    if not all(row[-1] for row in rows):
        print("error: a width bound was violated", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


class BadInput(Exception):
    pass


def read_summary(path) -> list:
    """Series per method from a summary CSV; raises BadInput if unusable."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise BadInput(f"cannot read {path}: {exc}") from None
    if not rows:
        raise BadInput(f"{path} has no data rows")
    missing = {"method", "N", "mse"} - set(rows[0])
    if missing:
        raise BadInput(f"{path} lacks columns: {', '.join(sorted(missing))}")
    series = {}
    for row in rows:
        try:
            n, mse = float(row["N"]), float(row["mse"])
        except (TypeError, ValueError):
            raise BadInput(f"{path}: non-numeric N or mse in row {row}") from None
        if n > 0 and mse > 0 and math.isfinite(mse):
            series.setdefault(row["method"], Series(row["method"], [])).points.append((n, mse))
    if not series:
        raise BadInput(f"{path} has no positive MSE values to plot")
    for s in series.values():
        s.points.sort()
    return list(series.values())


def cmd_plot(summary_csv, out_svg) -> int:
    try:
        series = read_summary(summary_csv)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    svg = render_svg(series)
    with open(out_svg, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestmc", description="Nested expectation estimators and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def problem_flags(p):
        p.add_argument("--config", default=None, help="JSON file of settings")
        p.add_argument("--problem", default=S, help="p1 (binary signal) or p2 (wound-dressing trial)")
        p.add_argument("--M", default=S, help="problem 1: number of signals")
        p.add_argument("--p", default=S, help="problem 1: signal accuracy")
        p.add_argument("--scenario", default=S, help="problem 2: " + " or ".join(SCENARIOS))
        p.add_argument("--n", default=S, help="problem 2: trial participants")
        p.add_argument("--s", default=S, help="problem 2: outcome standard deviation")
        p.add_argument("--seed", default=S, help="master seed (default: $NESTMC_SEED or 0)")

    est = sub.add_parser("estimate", help="run one estimate and print JSON")
    problem_flags(est)
    est.add_argument("--method", default=S, help=" | ".join(METHODS))
    est.add_argument("--m", default=S, help="depth; the estimate uses N = 2**m samples")

    bench = sub.add_parser("bench", help="replicated MSE sweep")
    problem_flags(bench)
    bench.add_argument("--methods", default=S, help="comma-separated methods")
    bench.add_argument("--m-values", dest="m_values", default=S, help="depths, 'a..b' or 'a,b,c'")
    bench.add_argument("--r", default=S, help="replications per cell")
    bench.add_argument("--threads", default=S, help="worker threads")
    bench.add_argument("--reference", default=S, help="analytic or nested_mc")
    bench.add_argument("--ref-outer", dest="ref_outer", default=S, help="reference outer samples")
    bench.add_argument("--ref-inner", dest="ref_inner", default=S, help="reference inner samples or 'exact'")
    bench.add_argument("--no-control-variates", dest="control_variates", action="store_false", default=S,
                       help="plain nested MC reference")
    bench.add_argument("--out-dir", dest="out_dir", default=S, help="directory for estimates.csv, "
                       "summary.csv and report.json")

    diag = sub.add_parser("diagnose", help="partition width diagnostics")
    problem_flags(diag)
    diag.add_argument("--m", default=S, help="depth")
    diag.add_argument("--out", default=S, help="CSV path (default: stdout)")

    plot = sub.add_parser("plot", help="log-log SVG from a summary CSV")
    plot.add_argument("summary_csv")
    plot.add_argument("out_svg")
    return parser


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    try:
        if command == "plot":
            return cmd_plot(args["summary_csv"], args["out_svg"])
        config_path = args.pop("config", None)
        settings = resolve_settings(command, args, config_path)
        if command == "estimate":
            return cmd_estimate(settings)
        if command == "bench":
            return cmd_bench(settings)
        return cmd_diagnose(settings)
    except (ConfigError, NestMCError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
