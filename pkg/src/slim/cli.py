"""Command-line entry point: generate, fit, compare, metrics."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .comparison import compare_models
from .datagen import GroundTruthModel
from .metrics import structure_metrics
from .pipeline import MODELS, RunConfig, dumps, parse_generator, run_workflow, write_csv


class UsageError(ValueError):
    pass


def _hp_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    k, v = text.split("=", 1)
    return k, float(v)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slim", description="Sparse factor models and DAGs with latent variables.")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    g.add_argument("--generator", required=True, help='e.g. "lingam-suite d=5 N=500"')
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("fit", help="run the full workflow")
    f.add_argument("--model", choices=MODELS, default="dag")
    src = f.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV with observations as rows and a header of names")
    src.add_argument("--generator", help="generator spec instead of a CSV")
    f.add_argument("--test-fraction", type=float, default=0.2)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--samples", type=int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--m-top", type=int, default=10)
    f.add_argument("--beta-m", type=float)
    f.add_argument("--latents", type=int, default=0)
    f.add_argument("--fm-chains", type=int, default=1)
    f.add_argument("--dense", action="store_true", help="expect dense DAGs (column sparsity mean 0.99)")
    f.add_argument("--policy", choices=("bound", "half"), default="bound", help="edge inclusion rule")
    f.add_argument("--max-enumeration", type=int, default=6, help="largest d for ordering enumeration")
    f.add_argument("--hp", type=_hp_override, action="append", default=[], metavar="NAME=VALUE")
    f.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="compare per-sweep test log-likelihood columns of a CSV")
    c.add_argument("--loglik", required=True, help="CSV as written by fit (testloglik.csv)")
    c.add_argument("--out", help="write the report here instead of stdout")

    m = sub.add_parser("metrics", help="score an estimated edge list against the ground truth")
    m.add_argument("--edges", required=True, help="edges.json from fit")
    m.add_argument("--truth", required=True, help="truth.json from generate")
    m.add_argument("--names", help="comma-separated variable names (default x1..xd)")
    m.add_argument("--out")
    return ap


def _emit(obj, out):
    text = dumps(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args):
    data, truth = parse_generator(args.generator, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv")
    (out / "truth.json").write_text(dumps(truth.to_dict()))
    _emit({"data": str(out / "data.csv"), "truth": str(out / "truth.json"), "d": data.d, "n": data.n}, None)


def cmd_fit(args):
    ints = {"n_rep", "n_samples", "n_burnin", "m_top", "mh_perm_reps"}
    overrides = {k: int(v) if k in ints else v for k, v in args.hp}
    cfg = RunConfig(
        model=args.model, data=args.data, generator=args.generator, seed=args.seed, out=args.out,
        test_fraction=args.test_fraction, fm_chains=args.fm_chains, samples=args.samples, burnin=args.burnin,
        m_top=args.m_top, beta_m=args.beta_m, latents=args.latents, dense=args.dense, policy=args.policy,
        max_enumeration=args.max_enumeration, overrides=overrides,
    )
    res = run_workflow(cfg)
    summary = {"out": str(res.out), "steps": res.manifest["steps"]}
    if res.report is not None:
        summary.update(selected=res.report.selected, median_ratio=res.report.median_ratio)
    _emit(summary, None)


def cmd_compare(args):
    with open(args.loglik, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise UsageError(f"{args.loglik}: no samples")
    labels = rows[0][1:]
    cols = {k: [] for k in labels}
    for row in rows[1:]:
        for k, v in zip(labels, row[1:]):
            if v != "":
                cols[k].append(float(v))
    report = compare_models([(k, np.array(v)) for k, v in cols.items()])
    _emit(report.to_dict(), args.out)


def cmd_metrics(args):
    truth = GroundTruthModel.from_dict(json.loads(Path(args.truth).read_text()))
    edges = json.loads(Path(args.edges).read_text())
    d = truth.d
    names = args.names.split(",") if args.names else [f"x{i + 1}" for i in range(d)]
    if len(names) != d:
        raise UsageError(f"{len(names)} names for {d} variables")
    index = {n: i for i, n in enumerate(names)}
    est = np.zeros((d, d), dtype=int)
    eta = np.zeros((d, d))
    for e in edges:
        try:
            i, j = index[e["child"]], index[e["parent"]]
        except KeyError as exc:
            raise UsageError(f"edge refers to unknown variable {exc.args[0]!r}") from None
        est[i, j] = 1
        eta[i, j] = e.get("eta_median", 1.0)
    _emit(structure_metrics(est, truth, eta), args.out)


VERBS = {"generate": cmd_generate, "fit": cmd_fit, "compare": cmd_compare, "metrics": cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            sys.stderr.write(json.dumps({"error": "UsageError", "message": "invalid arguments"}) + "\n")
        return int(exc.code or 0)
    try:
        VERBS[args.verb](args)
    except Exception as exc:  # report every failure as machine-readable JSON
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
