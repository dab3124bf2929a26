"""Command-line interface: fit, predict, map, simulate.

Every subcommand is deterministic given its inputs, flags and seed.
Exit codes: 0 success, 1 I/O failure, 2 parse failure, 3 numeric
failure, 4 dimension mismatch; each error prints a single
machine-parsable ``error: <kind>: <detail>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ddc import DdcParams
from .diagnostics import (build_residual_map, block_residual_map, outlier_map,
                          render_svg, spec_to_csv)
from .errors import CsvParseError, DimensionError, MacroPcaError, NumericError
from .matrix import DEFAULT_NA_TOKENS, IncompleteMatrix, read_csv
from .pca import MacroPcaParams, icpca_fit, macropca_fit, macropca_predict
from .serialize import load_model, save_model
from .simulation import PRESETS, preset, run_study, write_curve_csv, write_manifest

EXIT_IO, EXIT_PARSE, EXIT_NUMERIC, EXIT_DIM = 1, 2, 3, 4


def _fmt(v) -> str:
    return format(float(v), ".15g")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macropca",
        description="Robust PCA for data with missing values and cellwise/rowwise outliers.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p_fit = sub.add_parser("fit", formatter_class=fmt,
                           help="fit a PCA model to a CSV matrix")
    p_fit.add_argument("input", help="input CSV (header row required)")
    p_fit.add_argument("--outdir", default=".", help="directory for the result bundle")
    p_fit.add_argument("--method", choices=("macropca", "icpca"), default="macropca")
    p_fit.add_argument("--k", type=int, default=None,
                       help="number of components (default: 80%% cumulative variance)")
    p_fit.add_argument("--kmax", type=int, default=10, help="maximum number of components")
    p_fit.add_argument("--alpha", type=float, default=0.5,
                       help="coverage fraction, h = ceil(alpha*n)")
    p_fit.add_argument("--maxiter", type=int, default=20, help="maximum subspace iterations")
    p_fit.add_argument("--tol", type=float, default=0.005,
                       help="subspace angle convergence tolerance (radians)")
    p_fit.add_argument("--ndir", type=int, default=250,
                       help="projection directions for the outlyingness stage")
    p_fit.add_argument("--seed", type=int, default=0, help="seed for direction sampling")
    p_fit.add_argument("--na-token", action="append", default=None,
                       help="NA token, repeatable (default: NA and empty)")
    p_fit.add_argument("--scale-columns", action="store_true",
                       help="divide each column by a robust scale before fitting")
    p_fit.add_argument("--row-labels", action="store_true",
                       help="treat the first CSV column as row labels")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", formatter_class=fmt,
                            help="score new rows with a fitted model")
    p_pred.add_argument("--model", required=True, help="model.json from fit")
    p_pred.add_argument("--input", default="-",
                        help="CSV of new rows, or - for standard input")
    p_pred.add_argument("--output", default="-", help="output CSV, or - for stdout")
    p_pred.add_argument("--na-token", action="append", default=None)
    p_pred.add_argument("--row-labels", action="store_true")
    p_pred.add_argument("--maxiter", type=int, default=20)
    p_pred.add_argument("--tol", type=float, default=1e-9,
                        help="imputation convergence tolerance")
    p_pred.set_defaults(func=cmd_predict)

    p_map = sub.add_parser("map", formatter_class=fmt,
                           help="render residual and outlier maps from a fit bundle")
    p_map.add_argument("--bundle", required=True, help="directory written by fit")
    p_map.add_argument("--outdir", default=None, help="output directory (default: bundle)")
    p_map.add_argument("--block", default=None, metavar="RxC",
                       help="aggregate the residual map into RxC blocks, e.g. 5x5")
    p_map.add_argument("--annotate", choices=("values", "residuals", "none"),
                       default="none", help="numbers to print inside the cells")
    p_map.add_argument("--data", default=None,
                       help="original CSV (required for --annotate values)")
    p_map.add_argument("--na-token", action="append", default=None)
    p_map.add_argument("--row-labels", action="store_true")
    p_map.add_argument("--label-top", type=int, default=3,
                       help="label this many extreme points in the outlier map")
    p_map.set_defaults(func=cmd_map)

    p_sim = sub.add_parser("simulate", formatter_class=fmt,
                           help="run a simulation study preset")
    p_sim.add_argument("--preset", choices=PRESETS, required=True)
    p_sim.add_argument("--outdir", default=".")
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--d", type=int, default=200)
    p_sim.add_argument("--k", type=int, default=6)
    p_sim.add_argument("--family", choices=("A09", "ALYZ"), default="A09")
    p_sim.add_argument("--replications", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--gammas", default=None,
                       help="comma-separated gamma grid override")
    p_sim.add_argument("--epsilons", default=None,
                       help="comma-separated epsilon grid override (setting 1)")
    p_sim.add_argument("--methods", default="icpca,macropca",
                       help="comma-separated methods to run")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def _na_tokens(args):
    return tuple(args.na_token) if args.na_token else DEFAULT_NA_TOKENS


def _write_csv_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_fit(args) -> int:
    X = read_csv(args.input, _na_tokens(args), row_labels=args.row_labels)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.method == "macropca":
        params = MacroPcaParams(alpha=args.alpha, k=args.k, k_max=args.kmax,
                                n_directions=args.ndir, max_iter=args.maxiter,
                                angle_tol=args.tol, scale_columns=args.scale_columns,
                                seed=args.seed, ddc=DdcParams())
        result = macropca_fit(X, params)
    else:
        result = icpca_fit(X, k=args.k, max_iter=args.maxiter, tol=args.tol,
                           k_max=args.kmax, alpha=args.alpha)
    save_model(result.model, outdir / "model.json")

    rows = list(X.row_labels())
    cols = list(X.column_labels())
    k = result.model.k
    _write_csv_rows(outdir / "scores.csv",
                    ["row"] + [f"score_{j + 1}" for j in range(k)],
                    [[rows[i]] + [_fmt(v) for v in result.scores[i]]
                     for i in range(X.shape[0])])
    _write_csv_rows(outdir / "residuals.csv",
                    ["row"] + cols,
                    [[rows[i]] + [_fmt(result.residuals[i, j]) if X.mask[i, j] else "NA"
                                  for j in range(X.shape[1])]
                     for i in range(X.shape[0])])
    flag_rows = [["cell", i, j, rows[i], cols[j]]
                 for i, j in np.argwhere(result.cell_flags)]
    flag_rows += [["row", i, "", rows[i], ""] for i in np.nonzero(result.row_flags)[0]]
    _write_csv_rows(outdir / "flags.csv",
                    ["kind", "row", "col", "row_label", "col_label"], flag_rows)
    _write_csv_rows(outdir / "od_sd.csv",
                    ["row", "od", "sd", "row_flag"],
                    [[rows[i], _fmt(result.od[i]), _fmt(result.sd[i]),
                      int(result.row_flags[i])] for i in range(X.shape[0])])
    for name, mat in (("na_imputed.csv", result.X_na_imputed),
                      ("cell_imputed.csv", result.X_cell_imputed)):
        _write_csv_rows(outdir / name, ["row"] + cols,
                        [[rows[i]] + [_fmt(v) for v in mat[i]]
                         for i in range(X.shape[0])])
    return 0


def _iter_csv_rows(stream, d, na, row_labels, source):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError(f"{source}: empty input") from None
    expected = d + (1 if row_labels else 0)
    if len(header) != expected:
        raise DimensionError(
            f"{source}: header has {len(header)} fields, model expects {expected}")
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != expected:
            raise DimensionError(
                f"{source}: row {lineno} has {len(rec)} fields, expected {expected}")
        label = rec[0] if row_labels else str(lineno - 1)
        toks = rec[1:] if row_labels else rec
        vals = np.empty(d)
        for j, tok in enumerate(toks):
            t = tok.strip()
            if t in na or tok in na:
                vals[j] = np.nan
                continue
            try:
                vals[j] = float(t)
            except ValueError:
                raise CsvParseError(
                    f"{source}: row {lineno}, column {j + 1}: cannot parse {tok!r}"
                ) from None
        yield label, vals


def cmd_predict(args) -> int:
    model = load_model(args.model)
    d = model.dim
    na = set(_na_tokens(args))
    cols = [f"V{j + 1}" for j in range(d)]
    header = (["row"] + [f"score_{j + 1}" for j in range(model.k)]
              + ["od", "sd", "row_flag", "n_cell_flags", "cell_flags"]
              + [f"imputed_{c}" for c in cols])

    in_stream = sys.stdin if args.input == "-" else open(args.input, "r", encoding="utf-8", newline="")
    out_stream = sys.stdout if args.output == "-" else open(args.output, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(out_stream)
        writer.writerow(header)
        source = "<stdin>" if args.input == "-" else str(args.input)
        for label, vals in _iter_csv_rows(in_stream, d, na, args.row_labels, source):
            p = macropca_predict(vals, model, max_iter=args.maxiter, tol=args.tol)
            flagged = np.nonzero(p.cell_flags)[0]
            writer.writerow(
                [label] + [_fmt(v) for v in p.scores]
                + [_fmt(p.od), _fmt(p.sd), int(p.row_flag), len(flagged),
                   ";".join(str(j) for j in flagged)]
                + [_fmt(v) for v in p.x_imputed])
    finally:
        if in_stream is not sys.stdin:
            in_stream.close()
        if out_stream is not sys.stdout:
            out_stream.close()
    return 0


def _read_bundle(bundle: Path):
    model = load_model(bundle / "model.json")
    rows, cols, R, mask = [], None, [], []
    with open(bundle / "residuals.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        cols = next(reader)[1:]
        for rec in reader:
            rows.append(rec[0])
            vals = [np.nan if t == "NA" else float(t) for t in rec[1:]]
            R.append(vals)
            mask.append([t != "NA" for t in rec[1:]])
    od = []
    with open(bundle / "od_sd.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            od.append(float(rec[1]))
    return model, rows, cols, np.array(R), np.array(mask, dtype=bool), np.array(od)


def cmd_map(args) -> int:
    bundle = Path(args.bundle)
    outdir = Path(args.outdir) if args.outdir else bundle
    outdir.mkdir(parents=True, exist_ok=True)
    model, rows, cols, R, mask, od = _read_bundle(bundle)

    annotations = None
    if args.annotate == "residuals":
        annotations = np.where(mask, R, np.nan)
    elif args.annotate == "values":
        if not args.data:
            raise CsvParseError("--annotate values requires --data with the original CSV")
        X = read_csv(args.data, _na_tokens(args), row_labels=args.row_labels)
        if X.shape != R.shape:
            raise DimensionError("--data shape does not match the bundle")
        annotations = np.where(X.mask, X.values, np.nan)

    Rsafe = np.where(mask, R, 0.0)
    spec = build_residual_map(Rsafe, mask, od, model.cutoff_od, rows, cols,
                              annotations=annotations, r_cutoff=model.cell_cutoff)
    if args.block:
        try:
            rb, cb = (int(t) for t in args.block.lower().split("x"))
        except ValueError:
            raise CsvParseError(f"--block expects RxC, got {args.block!r}") from None
        spec = block_residual_map(spec, rb, cb)
    render_svg(spec, outdir / "residual_map.svg")
    spec_to_csv(spec, outdir / "map_spec.csv")

    scores_sd = _sd_from_bundle(bundle)
    omap_spec = _outlier_spec(scores_sd, od, model, rows, args.label_top)
    render_svg(omap_spec, outdir / "outlier_map.svg")
    return 0


def _sd_from_bundle(bundle: Path):
    sd = []
    with open(bundle / "od_sd.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            sd.append(float(rec[2]))
    return np.array(sd)


def _outlier_spec(sd, od, model, rows, label_top):
    from .diagnostics import OutlierMapSpec, classify_quadrant

    quadrants = classify_quadrant(sd, od, model.cutoff_sd, model.cutoff_od)
    order = np.lexsort((-sd, -od))
    labels = tuple((int(i), rows[int(i)]) for i in order[:max(label_top, 0)])
    return OutlierMapSpec(sd=sd, od=od, cutoff_sd=model.cutoff_sd,
                          cutoff_od=model.cutoff_od, quadrants=quadrants,
                          labels=labels, row_labels=tuple(rows))


def cmd_simulate(args) -> int:
    setting = preset(args.preset, n=args.n, d=args.d, k=args.k,
                     family=args.family, seed=args.seed,
                     replications=args.replications)
    if args.gammas and setting.grid_name == "gamma":
        grid = tuple(float(t) for t in args.gammas.split(","))
        setting = type(setting)(setting.name, setting.base, "gamma", grid)
    if args.epsilons and setting.grid_name == "epsilon":
        grid = tuple(float(t) for t in args.epsilons.split(","))
        setting = type(setting)(setting.name, setting.base, "epsilon", grid)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    curve = run_study(setting, methods=methods, replications=args.replications)
    write_curve_csv(curve, outdir / f"{setting.name}.csv")
    write_manifest([setting], args.replications, outdir / "manifest.json")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CsvParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"error: dimension: {exc}", file=sys.stderr)
        return EXIT_DIM
    except (NumericError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MacroPcaError as exc:
        print(f"error: internal: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
