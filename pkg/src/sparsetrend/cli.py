"""Command-line front end.

Verbs:
  fit    run the filter on a CSV series and write decomposition, events,
         selection report, coefficients and a run manifest
  synth  generate a synthetic fixture (signal + ground truth) from planted
         components or a named preset
  check  recompute the KKT optimality report for an existing fit directory

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
All outputs are deterministic: a second `fit` run from the written manifest
produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dictionary as dct
from .dictionary import DictionarySpec, Kind
from .oracle import MAX_ORACLE_N, dense_problem, kkt_check, kkt_from_correlations
from .pipeline import decompose, omega_from_periods
from .selection import SelectionError
from .signals import Signal, SyntheticSpec, generate
from .solver import AdaptiveWeights, NumericalFailure, ols_init

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _fmt(x):
    """Shortest round-trip decimal for floats; plain digits for ints."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# input parsing
# ---------------------------------------------------------------------------


def read_signal_csv(path, column=None):
    """Read one column of a CSV as the signal.

    The file holds one value per row, with an optional header row and
    optional extra columns (e.g. timestamps, ignored).  ``column`` selects
    by header name or zero-based index; the default is the last column.
    """
    try:
        with open(path, newline="") as fh:
            rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(cell.strip() for cell in row)]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if not rows:
        raise DataError(f"{path}: no data rows")

    def _is_float(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = None
    first = rows[0][1]
    if not all(_is_float(c) for c in first):
        header = [c.strip() for c in first]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header only, no data rows")

    if column is None:
        col_idx = len(rows[0][1]) - 1
    else:
        try:
            col_idx = int(column)
        except (TypeError, ValueError):
            if header is None or column not in header:
                raise UsageError(f"column {column!r} not found (no matching header)")
            col_idx = header.index(column)

    values = []
    n_nan = 0
    first_bad = None
    for lineno, row in rows:
        if col_idx >= len(row):
            raise DataError(f"{path}:{lineno}: row has only {len(row)} columns")
        cell = row[col_idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"{path}:{lineno}: cannot parse {cell!r} as a number")
        if math.isnan(v):
            n_nan += 1
            first_bad = first_bad or lineno
            continue
        if math.isinf(v):
            raise DataError(f"{path}:{lineno}: non-finite value")
        values.append(v)
    if not values:
        raise DataError(f"{path}: selected column contains no finite values")
    if n_nan:
        raise DataError(f"{path}:{first_bad}: column contains NaN values")
    if len(values) < 3:
        raise UsageError(f"{path}: need at least 3 samples, got {len(values)}")
    return np.array(values)


def _parse_floats(text, what):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise UsageError(f"cannot parse {what}: {e}") from e


def _parse_bounds(items):
    bounds = {}
    for item in items or ():
        try:
            kind, lo, hi = item.split(":")
            bounds[Kind(kind.lower())] = (float(lo), float(hi))
        except (ValueError, KeyError) as e:
            raise UsageError(
                f"bad --bounds {item!r} (expected KIND:LOWER:UPPER, e.g. step:0:inf)"
            ) from e
    return bounds


def _resolve_omega(args, manifest):
    given = [
        args.omega is not None,
        args.periods is not None,
        args.period_range is not None,
    ]
    if sum(given) > 1:
        raise UsageError("give at most one of --omega, --periods, --period-range")
    if args.omega is not None:
        return tuple(sorted(_parse_floats(args.omega, "--omega")))
    if args.periods is not None:
        return omega_from_periods(_parse_floats(args.periods, "--periods"))
    if args.period_range is not None:
        try:
            lo, hi, count = args.period_range.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError as e:
            raise UsageError("bad --period-range (expected MIN:MAX:COUNT)") from e
        if count < 1:
            raise UsageError("--period-range count must be positive")
        return omega_from_periods(np.linspace(lo, hi, count))
    if manifest is not None:
        return tuple(manifest["omega"])
    return ()


# ---------------------------------------------------------------------------
# output writing
# ---------------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_outputs(outdir, result, manifest):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    deco = result.decomposition
    y = result.signal.values
    n = len(y)
    _write_csv(
        outdir / "decomposition.csv",
        ["t", "y", "fitted", "x", "w", "u", "s", "baseline"],
        (
            [
                t,
                _fmt(y[t]),
                _fmt(deco.fitted[t]),
                _fmt(deco.trend[t]),
                _fmt(deco.level[t]),
                _fmt(deco.outliers[t]),
                _fmt(deco.seasonal[t]),
                _fmt(deco.baseline),
            ]
            for t in range(n)
        ),
    )
    _write_csv(
        outdir / "events.csv",
        ["kind", "location", "magnitude"],
        ([e.kind.value, _fmt(e.location), _fmt(e.magnitude)] for e in deco.events),
    )
    scores = result.report.scores
    best = result.report.best
    _write_csv(
        outdir / "selection.csv",
        ["lambda", "gamma", "rss", "n_active", "converged", "cycles", "ebic", "selected"],
        (
            [
                _fmt(r.lam),
                _fmt(r.gamma),
                _fmt(r.rss),
                r.n_active,
                _fmt(r.converged),
                r.cycles_used,
                _fmt(scores[(r.lam, r.gamma)]) if (r.lam, r.gamma) in scores else "",
                _fmt((r.lam, r.gamma) == best),
            ]
            for r in result.results
        ),
    )
    best_fit = result.report.best_fit
    _write_csv(
        outdir / "coefficients.csv",
        ["kind", "index", "value"],
        (
            [c.kind.value, c.index, _fmt(v)]
            for c, v in best_fit.coefficients.entries.items()
        ),
    )
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _merge(cli_value, manifest, key, default):
    if cli_value is not None:
        return cli_value
    if manifest is not None and key in manifest:
        return manifest[key]
    return default


def cmd_fit(args):
    manifest_in = None
    if args.manifest:
        try:
            with open(args.manifest) as fh:
                manifest_in = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read manifest {args.manifest}: {e}") from e

    input_path = args.input or (manifest_in or {}).get("input")
    if not input_path:
        raise UsageError("an input CSV is required (--input or a manifest)")
    column = _merge(args.column, manifest_in, "column", None)
    omega = _resolve_omega(args, manifest_in)
    gammas = (
        _parse_floats(args.gammas, "--gammas")
        if args.gammas is not None
        else _merge(None, manifest_in, "gammas", [0.0, 0.5, 1.0, 2.0])
    )
    lambdas = (
        _parse_floats(args.lambdas, "--lambdas")
        if args.lambdas is not None
        else _merge(None, manifest_in, "lambdas", None)
    )
    n_lambda = int(_merge(args.n_lambda, manifest_in, "n_lambda", 50))
    min_ratio = float(_merge(args.lambda_min_ratio, manifest_in, "lambda_min_ratio", 1e-4))
    ebic_xi = float(_merge(args.ebic_xi, manifest_in, "ebic_xi", 1.0))
    tol = float(_merge(args.tol, manifest_in, "tol", 1e-7))
    max_cycles = int(_merge(args.max_cycles, manifest_in, "max_cycles", 10_000))
    workers = _merge(args.workers, manifest_in, "workers", None)
    if args.no_center:
        center = False
    else:
        center = bool(_merge(None, manifest_in, "center", True))
    if args.bounds:
        bounds = _parse_bounds(args.bounds)
    elif manifest_in is not None and "bounds" in manifest_in:
        bounds = {
            Kind(k): (float(lo), float(hi))
            for k, (lo, hi) in manifest_in["bounds"].items()
        }
    else:
        bounds = {}

    values = read_signal_csv(input_path, column)
    result = decompose(
        values,
        omega=omega,
        lambdas=lambdas,
        gammas=tuple(gammas),
        n_lambda=n_lambda,
        lambda_min_ratio=min_ratio,
        ebic_xi=ebic_xi,
        bounds=bounds,
        tol=tol,
        max_cycles=max_cycles,
        center=center,
        workers=workers,
    )

    lam_grids = {}
    for r in result.results:
        lam_grids.setdefault(_fmt(r.gamma), []).append(r.lam)
    best_fit = result.report.best_fit
    manifest_out = {
        "tool": "sparsetrend",
        "version": __version__,
        "input": str(input_path),
        "column": column,
        "omega": list(result.spec.omega),
        "gammas": [float(g) for g in gammas],
        "lambdas": lambdas,
        "n_lambda": n_lambda,
        "lambda_min_ratio": min_ratio,
        "ebic_xi": ebic_xi,
        "bounds": {k.value: list(v) for k, v in bounds.items()},
        "tol": tol,
        "max_cycles": max_cycles,
        "center": center,
        "workers": workers,
        "resolved_lambda_grids": lam_grids,
        "selected": {
            "lambda": best_fit.lam,
            "gamma": best_fit.gamma,
            "baseline": best_fit.baseline,
            "rss": best_fit.rss,
            "n_active": best_fit.n_active,
        },
        "outputs": [
            "decomposition.csv",
            "events.csv",
            "selection.csv",
            "coefficients.csv",
            "manifest.json",
        ],
    }
    _write_outputs(args.output_dir, result, manifest_out)
    print(
        f"selected lambda={_fmt(best_fit.lam)} gamma={_fmt(best_fit.gamma)} "
        f"n_active={best_fit.n_active} rss={_fmt(best_fit.rss)}"
    )
    print(f"wrote {args.output_dir}/decomposition.csv events.csv selection.csv "
          f"coefficients.csv manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _parse_planted(items, what, parts=2):
    out = []
    for item in items or ():
        toks = item.split(":")
        if len(toks) != parts:
            raise UsageError(f"bad --{what} {item!r}")
        try:
            out.append(tuple(float(t) for t in toks))
        except ValueError as e:
            raise UsageError(f"bad --{what} {item!r}: {e}") from e
    return out


def _preset_spec(name, n, noise, seed):
    if name == "otdr":
        # fiber-trace-like: descending ramp, two downward losses, one reflective spike
        n = n or 400
        noise = 0.02 if noise is None else noise
        return SyntheticSpec(
            n=n,
            slopes=((0, -0.015),),
            steps=((int(n * 0.375) - 1, -0.8), (int(n * 0.7) - 1, -0.5)),
            spikes=((int(n * 0.5), 1.2),),
            noise_sigma=noise,
            seed=seed,
            baseline=22.0,
        )
    if name == "wind":
        # daily-periodic generation with a shutdown window
        n = n or 336
        noise = 0.4 if noise is None else noise
        return SyntheticSpec(
            n=n,
            sinusoids=((2.0 * math.pi / 24.0, 3.0, 1.0),),
            steps=((int(n * 0.45) - 1, -6.0), (int(n * 0.62) - 1, 6.0)),
            noise_sigma=noise,
            seed=seed,
            baseline=7.0,
        )
    raise UsageError(f"unknown preset {name!r}")


def cmd_synth(args):
    seed = args.seed if args.seed is not None else 0
    if args.preset:
        spec = _preset_spec(args.preset, args.n, args.noise_sigma, seed)
    else:
        if args.n is None:
            raise UsageError("--n is required without --preset")
        sinusoids = []
        for per, a, b in _parse_planted(args.sinusoid, "sinusoid", 3):
            sinusoids.append((2.0 * math.pi / per, a, b))
        spec = SyntheticSpec(
            n=args.n,
            slopes=tuple((int(j), m) for j, m in _parse_planted(args.slope, "slope")),
            steps=tuple((int(j), m) for j, m in _parse_planted(args.step, "step")),
            spikes=tuple((int(j), m) for j, m in _parse_planted(args.spike, "spike")),
            sinusoids=tuple(sinusoids),
            noise_sigma=args.noise_sigma if args.noise_sigma is not None else 0.0,
            seed=seed,
            baseline=args.baseline,
        )
    try:
        signal, truth = generate(spec)
    except ValueError as e:
        raise UsageError(str(e)) from e
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        outdir / "signal.csv",
        ["t", "y"],
        ([t, _fmt(signal.values[t])] for t in range(spec.n)),
    )
    _write_csv(
        outdir / "truth_decomposition.csv",
        ["t", "clean", "x", "w", "u", "s", "baseline"],
        (
            [
                t,
                _fmt(truth.fitted[t]),
                _fmt(truth.trend[t]),
                _fmt(truth.level[t]),
                _fmt(truth.outliers[t]),
                _fmt(truth.seasonal[t]),
                _fmt(truth.baseline),
            ]
            for t in range(spec.n)
        ),
    )
    _write_csv(
        outdir / "truth_events.csv",
        ["kind", "location", "magnitude"],
        ([e.kind.value, _fmt(e.location), _fmt(e.magnitude)] for e in truth.events),
    )
    print(f"wrote {outdir}/signal.csv truth_decomposition.csv truth_events.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args):
    rundir = Path(args.run_dir)
    try:
        with open(rundir / "manifest.json") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest in {rundir}: {e}") from e

    values = read_signal_csv(manifest["input"], manifest.get("column"))
    spec = DictionarySpec(
        len(values),
        tuple(manifest["omega"]),
        bounds={
            Kind(k): (float(lo), float(hi))
            for k, (lo, hi) in manifest.get("bounds", {}).items()
        },
    )
    theta = np.zeros(spec.p)
    try:
        with open(rundir / "coefficients.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            for row in reader:
                kind, index, value = row
                c = spec.column(Kind(kind), int(index))
                theta[spec.flat_index(c)] = float(value)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read coefficients in {rundir}: {e}") from e

    sel = manifest["selected"]
    lam, gamma, baseline = sel["lambda"], sel["gamma"], sel["baseline"]
    centered = Signal(values - baseline)
    weights = AdaptiveWeights(ols_init(spec, centered), gamma)
    if spec.n <= MAX_ORACLE_N:
        prob = dense_problem(spec, centered, weights, lam)
        report = kkt_check(prob, theta)
        mode = "dense"
    else:
        cy = dct.signal_correlations(spec, centered)
        g = cy.copy()
        for i in np.flatnonzero(theta):
            g -= theta[i] * dct.gram_column(spec, int(i))
        g /= spec.n
        lo, hi = spec.bound_arrays()
        report = kkt_from_correlations(g, theta, lam, weights.values, lo, hi)
        mode = "matrix-free"

    budget = args.budget if args.budget is not None else 1e-6 * (1.0 + lam)
    payload = {
        "mode": mode,
        "lambda": lam,
        "gamma": gamma,
        "budget": budget,
        "stationarity": report.stationarity,
        "inactive": report.inactive,
        "bound": report.bound,
        "excluded": report.excluded,
        "worst": report.worst,
        "ok": bool(report.worst <= budget),
    }
    with open(rundir / "kkt.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"kkt[{mode}] worst={report.worst:.3e} budget={budget:.3e} "
        f"{'OK' if payload['ok'] else 'VIOLATED'}"
    )
    return EXIT_OK if payload["ok"] else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsetrend",
        description="Decompose a noisy series into trend, level shifts, outliers and sinusoids.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="run the filter on a CSV series")
    p_fit.add_argument("--input", help="input CSV (one value per row)")
    p_fit.add_argument("--column", help="column name or zero-based index (default: last)")
    p_fit.add_argument("--output-dir", required=True)
    p_fit.add_argument("--omega", help="comma-separated angular frequencies (rad/sample)")
    p_fit.add_argument("--periods", help="comma-separated periods (samples/cycle)")
    p_fit.add_argument("--period-range", help="MIN:MAX:COUNT periods, linearly spaced")
    p_fit.add_argument("--gammas", help="comma-separated gamma grid (default 0,0.5,1,2)")
    p_fit.add_argument("--lambdas", help="explicit comma-separated lambda grid")
    p_fit.add_argument("--n-lambda", type=int, help="lambda grid size (default 50)")
    p_fit.add_argument("--lambda-min-ratio", type=float, help="lambda_min / lambda_max (default 1e-4)")
    p_fit.add_argument("--ebic-xi", type=float, help="EBIC xi in [0,1] (default 1)")
    p_fit.add_argument("--bounds", action="append", metavar="KIND:LO:HI",
                       help="coefficient bounds for a block, e.g. step:0:inf (repeatable)")
    p_fit.add_argument("--tol", type=float, help="convergence tolerance (default 1e-7)")
    p_fit.add_argument("--max-cycles", type=int, help="sweep cap per grid point (default 10000)")
    p_fit.add_argument("--no-center", action="store_true", help="skip mean-centering")
    p_fit.add_argument("--workers", type=int, help="parallel gamma paths (default serial)")
    p_fit.add_argument("--manifest", help="read settings from an earlier run's manifest.json")
    p_fit.set_defaults(func=cmd_fit)

    p_synth = sub.add_parser("synth", help="generate a synthetic fixture")
    p_synth.add_argument("--output-dir", required=True)
    p_synth.add_argument("--preset", choices=["otdr", "wind"])
    p_synth.add_argument("--n", type=int)
    p_synth.add_argument("--slope", action="append", metavar="IDX:MAG")
    p_synth.add_argument("--step", action="append", metavar="IDX:MAG")
    p_synth.add_argument("--spike", action="append", metavar="IDX:MAG")
    p_synth.add_argument("--sinusoid", action="append", metavar="PERIOD:A:B")
    p_synth.add_argument("--baseline", type=float, default=0.0)
    p_synth.add_argument("--noise-sigma", type=float)
    p_synth.add_argument("--seed", type=int)
    p_synth.set_defaults(func=cmd_synth)

    p_check = sub.add_parser("check", help="KKT report for an existing fit directory")
    p_check.add_argument("run_dir")
    p_check.add_argument("--budget", type=float,
                         help="violation budget (default 1e-6 * (1 + lambda))")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, SelectionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
