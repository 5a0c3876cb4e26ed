"""Command-line entry point: ``oddforge <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 the OOD constraint could
not be met.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _numeric
from .derivation import DerivationConfig, dataset_digest, derive
from .errors import (
    NonConvergenceError,
    OddError,
    UnsatisfiableConstraintError,
)
from .geometry import load_ground_truth
from .ingestion import ColumnMapping, parse_csv, parse_openlabel, parse_real, write_table
from .kernel import KernelConfig
from .model import KernelOdd, band_index
from .validation import McConfig, McResult, pr_sweep, run_monte_carlo

log = logging.getLogger("oddforge")

EXIT_OK, EXIT_INPUT, EXIT_CONSTRAINT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# Defaults live here rather than on the parser so that a --config file can
# fill anything the command line leaves unset.
DEFAULTS = {
    "format": "csv",
    "map": None,
    "label_column": "label",
    "id_label": "id",
    "ood_label": "ood",
    "lenient": False,
    "kappa": 1.0,
    "eta": 1.0,
    "lambda_": 0.05,
    "distance_mode": "global",
    "normalize": False,
    "zeta": None,
    "xi": None,
    "bands": None,
    "anchors": "10,100,1000",
    "samples": 20000,
    "seed": 0,
}


def _common_data_flags(p):
    p.add_argument("--format", choices=("csv", "openlabel"), default=None)
    p.add_argument("--map", default=None, help="comma-separated dimension columns/attributes")
    p.add_argument("--label-column", dest="label_column", default=None)
    p.add_argument("--id-label", dest="id_label", default=None)
    p.add_argument("--ood-label", dest="ood_label", default=None)
    p.add_argument("--lenient", action="store_const", const=True, default=None,
                   help="skip OpenLABEL frames missing mapped attributes")


def _kernel_flags(p):
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--distance-mode", dest="distance_mode", choices=("global", "per_dimension"), default=None)
    p.add_argument("--normalize", action="store_const", const=True, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--xi", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oddforge", description="Kernel-based ODD derivation and validation.")
    parser.add_argument("--config", default=None, help="JSON file with flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("derive", help="derive a model from labelled samples")
    p.add_argument("--input", default=None)
    _common_data_flags(p)
    _kernel_flags(p)
    p.add_argument("--output", default=None)

    p = sub.add_parser("query", help="score points against a model")
    p.add_argument("--model", default=None)
    p.add_argument("--point", action="append", default=None, help='"v1,v2,..." (repeatable)')
    p.add_argument("--input", default=None, help="CSV of points")
    p.add_argument("--map", default=None)
    p.add_argument("--bands", default=None, help="comma-separated increasing band boundaries")
    p.add_argument("--output", default=None)

    p = sub.add_parser("validate-mc", help="Monte-Carlo validation against a ground truth spec")
    p.add_argument("--spec", default=None)
    p.add_argument("--anchors", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    _kernel_flags(p)
    p.add_argument("--output-dir", dest="output_dir", default=None)

    p = sub.add_parser("pr-curve", help="precision/recall sweep of a model on labelled data")
    p.add_argument("--model", default=None)
    p.add_argument("--labeled-data", dest="labeled_data", default=None)
    _common_data_flags(p)
    p.add_argument("--output", default=None)

    p = sub.add_parser("info", help="print model metadata")
    p.add_argument("--model", default=None)
    p.add_argument("--verify-data", dest="verify_data", default=None,
                   help="recompute the dataset digest from this data file")
    _common_data_flags(p)
    return parser


def _resolve(args, config: dict):
    for key, value in vars(args).items():
        if value is None:
            cfg_key = "lambda" if key == "lambda_" else key
            if cfg_key in config:
                setattr(args, key, config[cfg_key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            flag = "--" + n.rstrip("_").replace("_", "-")
            raise UsageError(f"{args.command}: {flag} is required")


def _floats(text: str, what: str) -> list[float]:
    parts = str(text).split(",")
    try:
        return [parse_real(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"malformed {what} {text!r}: {exc}") from None


def _kernel_config(args) -> KernelConfig:
    return KernelConfig(
        kappa=float(args.kappa),
        eta=float(args.eta),
        lam=float(args.lambda_),
        distance_mode=args.distance_mode,
        normalize=bool(args.normalize),
    )


def _mapping(args, columns=None) -> ColumnMapping:
    cols = [c.strip() for c in args.map.split(",")] if args.map else columns
    if not cols:
        raise UsageError(f"{args.command}: --map is required")
    return ColumnMapping(tuple(cols), args.label_column, args.id_label, args.ood_label)


def _csv_header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _load_dataset(args, path):
    if args.format == "openlabel":
        return parse_openlabel(path, _mapping(args), strict=not args.lenient)
    header = _csv_header(path)
    default_cols = [h for h in header if h != args.label_column]
    return parse_csv(path, _mapping(args, default_cols))


def cmd_derive(args) -> int:
    _require(args, "input", "output", "zeta", "xi")
    ds = _load_dataset(args, args.input)
    cfg = DerivationConfig(_kernel_config(args), zeta=float(args.zeta), xi=float(args.xi))
    model, report = derive(ds, cfg)
    model.save(args.output)
    print(report.summary())
    print(f"wrote {args.output}")
    return EXIT_OK


def _emit(text: str, output) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_query(args) -> int:
    _require(args, "model")
    model = KernelOdd.load(args.model)
    if args.point and args.input:
        raise UsageError("query: use either --point or --input, not both")
    if args.point:
        pts = [_floats(p, "point") for p in args.point]
    elif args.input:
        header = _csv_header(args.input)
        cols = [c.strip() for c in args.map.split(",")] if args.map else header
        ds = parse_csv(args.input, ColumnMapping(tuple(cols)))
        pts = ds.id_samples.tolist()
    else:
        raise UsageError("query: --point or --input is required")
    for i, p in enumerate(pts):
        if len(p) != model.dimension:
            print(f"error: point {i} has {len(p)} dimensions, model expects {model.dimension}",
                  file=sys.stderr)
            return EXIT_INPUT
    bands = _floats(args.bands, "bands") if args.bands else None
    scores = model.score_batch(pts)
    cols = ["index", "affinity", "inside"] + (["band"] if bands is not None else [])
    rows = []
    for i, (a, inside) in enumerate(scores):
        row = [i, a, inside]
        if bands is not None:
            row.append(band_index(a, bands))
        rows.append(row)
    _emit(write_table(rows, cols, None), args.output)
    return EXIT_OK


def cmd_validate_mc(args) -> int:
    _require(args, "spec", "output_dir")
    gt, lower, upper = load_ground_truth(args.spec)
    counts = tuple(int(v) for v in _floats(args.anchors, "anchor counts"))
    zeta = 0.5 if args.zeta is None else float(args.zeta)
    xi = 0.1 if args.xi is None else float(args.xi)
    cfg = McConfig(
        ground_truth=gt,
        lower=tuple(lower),
        upper=tuple(upper),
        anchor_counts=counts,
        n_validation=int(args.samples),
        seed=int(args.seed),
        derivation=DerivationConfig(_kernel_config(args), zeta=zeta, xi=xi),
    )
    result = run_monte_carlo(cfg)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(result.results_rows(), McResult.RESULT_COLUMNS, out / "results.csv")
    write_table(result.summary_rows(), McResult.SUMMARY_COLUMNS, out / "summary.csv")
    print(f"{'anchors':>8}  {'r2_precision':>12}  {'r2_recall':>10}")
    for count, r2p, r2r in result.summary_rows():
        fp = f"{r2p:.4f}" if r2p is not None else "n/a"
        fr = f"{r2r:.4f}" if r2r is not None else "n/a"
        print(f"{count!s:>8}  {fp:>12}  {fr:>10}")
    print(f"runtime {result.runtime_s:.2f}s; wrote {out / 'results.csv'} and {out / 'summary.csv'}")
    return EXIT_OK


def cmd_pr_curve(args) -> int:
    _require(args, "model", "labeled_data")
    model = KernelOdd.load(args.model)
    ds = _load_dataset(args, args.labeled_data)
    if ds.dimension != model.dimension:
        print(f"error: data has {ds.dimension} dimensions, model expects {model.dimension}",
              file=sys.stderr)
        return EXIT_INPUT
    pts = np.vstack([ds.id_samples, ds.ood_samples])
    truth = np.concatenate([np.ones(len(ds.id_samples), bool), np.zeros(len(ds.ood_samples), bool)])
    if pts.shape[0] == 0:
        raise UsageError("pr-curve: labelled data is empty")
    curve = pr_sweep(model.affinities(pts), truth)
    if curve.degenerate_truth:
        print("warning: labelled data contains a single class; curve is degenerate", file=sys.stderr)
    rows = [
        [z, p, r, c.tp, c.fp, c.tn, c.fn, curve.degenerate_truth]
        for z, p, r, c in zip(curve.thresholds, curve.precision, curve.recall, curve.counts)
    ]
    cols = ["zeta", "precision", "recall", "tp", "fp", "tn", "fn", "degenerate_truth"]
    _emit(write_table(rows, cols, None), args.output)
    return EXIT_OK


def cmd_info(args) -> int:
    _require(args, "model")
    model = KernelOdd.load(args.model)
    kc = model.config
    print(f"format_version: {model.format_version}")
    print("kernel_type: rbf")
    print(f"dimension: {model.dimension}")
    if model.dimension_names:
        print(f"dimension_names: {','.join(model.dimension_names)}")
    print(f"anchors: {len(model)}")
    print(f"zeta: {model.zeta!r}")
    print(f"xi: {model.xi!r}")
    print(f"kappa: {kc.kappa!r}")
    print(f"eta: {kc.eta!r}")
    print(f"lambda: {kc.lam!r}")
    print(f"distance_mode: {kc.distance_mode}")
    print(f"normalize: {str(kc.normalize).lower()}")
    print(f"dataset_digest: {model.dataset_digest}")
    if not model.digest_looks_valid():
        print("warning: dataset_digest is not a SHA-256 hex digest", file=sys.stderr)
    if args.verify_data:
        ds = _load_dataset(args, args.verify_data)
        expected = dataset_digest(ds, kc, model.zeta, model.xi)
        if expected == model.dataset_digest:
            print("digest: verified")
        else:
            print(f"warning: dataset_digest mismatch (data gives {expected})", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "derive": cmd_derive,
    "query": cmd_query,
    "validate-mc": cmd_validate_mc,
    "pr-curve": cmd_pr_curve,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = {}
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
            if not isinstance(config, dict):
                raise UsageError("--config must hold a JSON object")
        args = _resolve(args, config)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _numeric.configure_threads()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnsatisfiableConstraintError, NonConvergenceError) as exc:
        print(f"error: OOD constraint cannot be met: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (OddError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
