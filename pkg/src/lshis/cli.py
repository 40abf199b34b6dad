"""Command-line driver: synth, select, cv, stats, bench."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import bench as benchmod
from . import stats as statsmod
from .data import DataError, bundled_path, load_csv, make_half_circles, make_inner_circles, plan_folds
from .eval import ModelGrid, run_cv
from .lsh import Family
from .pipeline import SelectionConfig, select_instances
from .sampling import Method

ANDS_GRID = [2, 4, 6, 8, 10]
FLAT_FIELDS = ("dataset", "config", "fold", "se", "sp", "gmean", "bacc", "f1", "retention",
               "winner", "seconds")


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _load(args):
    path = args.input
    if path.startswith("@"):
        path = bundled_path(path[1:])
    return load_csv(path, args.label_column)


def _add_input(p) -> None:
    p.add_argument("-i", "--input", required=True,
                   help="CSV file with header; '@pageblocks' selects the bundled copy")
    p.add_argument("--label-column", default=None, help="label column (default: last column)")


def _add_selection(p, multi: bool) -> None:
    nargs = "+" if multi else None
    p.add_argument("--family", nargs=nargs, default=["rhf"] if multi else "rhf",
                   choices=[f.value for f in Family])
    methods = [m.value for m in Method] + (["none"] if multi else [])
    p.add_argument("--method", nargs=nargs, default=["drop3-one"] if multi else "drop3-one",
                   choices=methods)
    p.add_argument("--ands", nargs=nargs, type=int, default=ANDS_GRID if multi else 4)
    p.add_argument("--r", "--bin-width", dest="r", nargs=nargs, type=float,
                   default=[1.0] if multi else 1.0,
                   help="DPF bin width on standardized data (cv/bench accept a sweep)")
    p.add_argument("--k", type=int, default=3, help="neighbours for DROP3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-standardize", dest="standardize", action="store_false")
    p.add_argument("--boundaries-prose", action="store_true",
                   help="boundaries mode keeps d >= mean - sigma instead of the two-sided band")


def _configs(args) -> list[SelectionConfig]:
    fams = args.family if isinstance(args.family, list) else [args.family]
    methods = args.method if isinstance(args.method, list) else [args.method]
    ands = args.ands if isinstance(args.ands, list) else [args.ands]
    widths = args.r if isinstance(args.r, list) else [args.r]
    cfgs = []
    for f, m, a, r in itertools.product(fams, [m for m in methods if m != "none"], ands, widths):
        cfg = SelectionConfig(f, m, a, r, args.k, args.seed, args.standardize, args.boundaries_prose)
        # r does not affect RHF, so a width sweep yields one RHF run per AND count
        if cfg not in cfgs and (cfg.family is not Family.RHF or r == widths[0]):
            cfgs.append(cfg)
    return cfgs


def cmd_synth(args) -> int:
    gen = make_half_circles if args.kind == "half-circles" else make_inner_circles
    d = gen(args.minority, args.ir, args.noise, args.seed)
    tmp = Path(args.output).with_name(f".{Path(args.output).name}.tmp")
    d.to_csv(tmp)
    os.replace(tmp, args.output)
    return 0


def cmd_select(args) -> int:
    d = _load(args)
    cfg = _configs(args)[0]
    rep = select_instances(d, cfg, workers=args.threads)
    payload = {"config": cfg.config_id, "seed": cfg.seed, **rep.to_dict()}
    text = json.dumps(payload, indent=1) + "\n"
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    if args.indices:
        _atomic_write(args.indices, "index\n" + "".join(f"{i}\n" for i in rep.selected))
    return 0


def cmd_cv(args) -> int:
    d = _load(args)
    folds = plan_folds(d, args.folds, args.seed)
    grid = ModelGrid(args.model, tuple(args.trees), tuple(args.depths), tuple(args.knn_k))
    runs = []
    if "none" in args.method:
        runs.append(None)
    runs.extend(_configs(args))
    name = args.dataset_name or Path(args.input.lstrip("@")).stem
    results, rows = [], []
    for cfg in runs:
        res = run_cv(d, folds, cfg, grid, args.inner_folds, args.seed, args.threads, args.standardize)
        results.append(res.to_dict())
        rows.extend(res.flat_rows(name))
        s = res.summary()
        logging.info("%s gmean=%.2f retention=%.2f", res.config_id,
                     100 * s["gmean"]["mean"], 100 * s["retention"]["mean"])
    report = {"dataset": name, "summary": d.summary(folds), "n_folds": args.folds,
              "seed": args.seed, "grid": grid.cells(), "results": results}
    _atomic_write(args.output, json.dumps(report, indent=1) + "\n")
    if args.csv:
        _atomic_write(args.csv, _csv_text(rows, FLAT_FIELDS))
    return 0


def cmd_stats(args) -> int:
    table = statsmod.ResultTable.from_flat_csv(args.results, args.metric)
    if len(table.columns) < 2:
        raise statsmod.StatsError("k >= 2 required")
    ref = args.reference if args.reference in table.columns else None
    rep = {"metric": args.metric, "columns": table.columns,
           **statsmod.report(table, ref, args.alpha)}
    text = json.dumps(rep, indent=1) + "\n"
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    d = _load(args)
    plan = benchmod.BenchPlan(tuple(args.workers), tuple(args.fractions), args.repetitions, args.seed)
    cfgs = _configs(args)
    if args.mode == "horizontal":
        recs = benchmod.bench_horizontal(d, cfgs, plan)
    else:
        recs = benchmod.bench_vertical(d, cfgs, plan, workers=args.threads)
    _atomic_write(args.output, _csv_text([r.csv_row() for r in recs], benchmod.CSV_FIELDS))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lshis", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a toy dataset")
    p.add_argument("kind", choices=["half-circles", "inner-circles"])
    p.add_argument("--minority", type=int, default=50)
    p.add_argument("--ir", type=float, default=100.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("select", help="bucketize and sample one dataset")
    _add_input(p)
    _add_selection(p, multi=False)
    p.add_argument("-o", "--output", help="report JSON (default: stdout)")
    p.add_argument("--indices", help="write selected row indices as a one-column CSV")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("cv", help="stratified cross-validation, baseline with --method none")
    _add_input(p)
    _add_selection(p, multi=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--inner-folds", type=int, default=3)
    p.add_argument("--model", choices=["forest", "knn"], default="forest")
    p.add_argument("--trees", type=int, nargs="+", default=[10, 25, 50])
    p.add_argument("--depths", type=int, nargs="+", default=[10, 20, 30])
    p.add_argument("--knn-k", type=int, nargs="+", default=[1, 3, 5])
    p.add_argument("--dataset-name")
    p.add_argument("-o", "--output", required=True, help="CV report JSON")
    p.add_argument("--csv", help="flat per-fold results CSV")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("stats", help="Friedman / Kruskal-Wallis / Wilcoxon on a results CSV")
    p.add_argument("results")
    p.add_argument("--metric", default="gmean")
    p.add_argument("--reference", default="baseline")
    p.add_argument("--alpha", type=float, default=statsmod.ALPHA)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="scalability sweeps")
    p.add_argument("mode", choices=["horizontal", "vertical"])
    _add_input(p)
    _add_selection(p, multi=True)
    p.set_defaults(method=["entropy"])
    p.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 6, 8, 12, 16])
    p.add_argument("--fractions", type=float, nargs="+", default=[0.2, 0.4, 0.6, 0.8, 1.0])
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, statsmod.StatsError, ValueError, OSError) as exc:
        print(f"lshis {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
