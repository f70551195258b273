"""
Command-line front end.

Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import multi_anchor as ma
from .config import ExperimentConfig, write_csv
from .cvt import lloyd
from .errors import ConvergenceError, OracleError
from .experiments import run_diffusion_experiment, run_quadrature_experiment
from .parameter_space import ProductDensity, read_points_csv, sample
from .persistence import load_model, save_model
from .plots import export_plots
from .problems import DiffusionProblem, diffusion_oracle, quadrature_oracle
from .quadrature import integrate_surrogate

log = logging.getLogger("cvthdmr")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _density(args) -> ProductDensity:
    if args.dist == "uniform":
        return ProductDensity.uniform(args.lower, args.upper)
    if args.dist == "beta":
        return ProductDensity.beta_law(args.alpha, args.beta)
    return ProductDensity.normal()


def _add_density(ap, default="uniform"):
    ap.add_argument("--dist", choices=("uniform", "beta", "normal"), default=default)
    ap.add_argument("--lower", type=float, default=0.0, help="uniform lower bound (all dimensions)")
    ap.add_argument("--upper", type=float, default=1.0, help="uniform upper bound (all dimensions)")
    ap.add_argument("--alpha", type=float, default=0.9)
    ap.add_argument("--beta", type=float, default=1.3)


def _points(path) -> np.ndarray:
    return read_points_csv(path)


def _oracle(problem: str, p: int, grid: int):
    if problem == "quadrature":
        return quadrature_oracle(p), {"problem": "quadrature"}
    prob = DiffusionProblem.create(n=grid, p=p)
    return diffusion_oracle(prob), {"problem": "diffusion", **prob.metadata()}


# -- subcommands ---------------------------------------------------------------


def cmd_sample(args):
    s = sample(_density(args), args.dim, args.n, args.seed)
    s.to_csv(args.out)
    print(f"wrote {len(s)} samples of dimension {s.dim} to {args.out}")


def cmd_cluster(args):
    pts = _points(args.input)
    part = lloyd(pts, args.clusters, seed=args.seed, tol=args.tol, max_iter=args.max_iter)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    part.write_assignments_csv(out / "assignments.csv")
    part.write_centroids_csv(out / "centroids.csv")
    (out / "partition.json").write_text(json.dumps(part.summary(), indent=2) + "\n")
    print(f"L={part.L} E_total={part.total_energy!r} iterations={part.iterations} converged={part.converged}")


def cmd_build(args):
    pts = _points(args.input)
    oracle, meta = _oracle(args.problem, pts.shape[1], args.grid)
    model = ma.build(oracle, pts, args.clusters, args.order, args.nodes_per_dim, args.node_scope, args.seed)
    model.metadata.update(meta)
    save_model(model, args.out)
    print(f"built L={model.L} r={model.order} K={args.nodes_per_dim} with {model.total_evals} model evaluations; "
          f"saved to {args.out}")


def cmd_predict(args):
    model = load_model(args.model)
    pts = _points(args.input)
    pred = model.predict_average(pts, args.order) if args.average else model.predict(pts, args.order)
    header = [f"y{j + 1}" for j in range(pred.shape[1])]
    write_csv(args.out, header, pred.tolist(), model.metadata.get("config_hash", "-"))
    print(f"wrote {pred.shape[0]} predictions to {args.out}")


def cmd_integrate(args):
    model = load_model(args.model)
    dens = _density(args)
    if args.method == "per-term-tensor":
        value = integrate_surrogate(model, dens, "per-term-tensor")
    else:
        query = model.predict_average if args.average else model.predict
        value = integrate_surrogate(lambda x: query(x, args.order), dens, "qmc", args.points, p=model.p)
    if args.out:
        write_csv(args.out, [f"y{j + 1}" for j in range(value.size)], [value.tolist()], "-")
    print(" ".join(repr(float(v)) for v in value[:10]) + (" ..." if value.size > 10 else ""))


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.for_kind(args.kind)
    if cfg.kind != args.kind:
        cfg = cfg.replace(kind=args.kind)
    kw = {}
    if args.seed is not None:
        kw["seeds"] = {"samples": args.seed, "cvt": args.seed, "test": args.seed + 1, "random_anchor": args.seed + 2}
    if args.clusters:
        kw["L"] = args.clusters
    if args.order:
        kw["r"] = args.order
    if args.nodes_per_dim is not None:
        kw["K"] = args.nodes_per_dim
    if args.node_scope is not None:
        kw["node_scope"] = args.node_scope
    if args.samples is not None:
        kw["N"] = args.samples
    if args.out is not None:
        kw["output_dir"] = args.out
    return cfg.replace(**kw) if kw else cfg


def cmd_experiment(args):
    cfg = _experiment_config(args)
    if args.write_config:
        cfg.save(args.write_config)
        print(f"wrote configuration to {args.write_config}")
        return
    run = run_diffusion_experiment if cfg.kind == "diffusion" else run_quadrature_experiment
    paths = run(cfg)
    for name, path in paths.items():
        print(f"{name}: {path}")


def cmd_export_plots(args):
    for path in export_plots(args.results, args.out):
        print(path)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cvthdmr", description="Multi-anchor cut-HDMR surrogates on CVT clusters.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw iid input samples")
    _add_density(s)
    s.add_argument("-p", "--dim", type=int, default=6)
    s.add_argument("-n", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("cluster", help="CVT (Lloyd) clustering of a sample file")
    c.add_argument("--input", required=True)
    c.add_argument("--clusters", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--max-iter", type=int, default=500)
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_cluster)

    b = sub.add_parser("build", help="build and save a CVT-HDMR model")
    b.add_argument("--input", required=True, help="sample CSV used for clustering")
    b.add_argument("--problem", choices=("quadrature", "diffusion"), default="quadrature")
    b.add_argument("--grid", type=int, default=63, help="interior nodes per side (diffusion)")
    b.add_argument("--clusters", type=int, default=1)
    b.add_argument("--order", type=int, default=2)
    b.add_argument("--nodes-per-dim", type=int, default=7)
    b.add_argument("--node-scope", choices=ma.NODE_SCOPES, default="global")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    pr = sub.add_parser("predict", help="evaluate a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--order", type=int, default=None)
    pr.add_argument("--average", action="store_true", help="average all expansions instead of dispatching")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    ig = sub.add_parser("integrate", help="integrate a saved model against a density")
    ig.add_argument("--model", required=True)
    _add_density(ig)
    ig.add_argument("--method", choices=("qmc", "per-term-tensor"), default="qmc")
    ig.add_argument("--points", type=int, default=2**20)
    ig.add_argument("--order", type=int, default=None)
    ig.add_argument("--average", action="store_true")
    ig.add_argument("--out", default=None)
    ig.set_defaults(func=cmd_integrate)

    ex = sub.add_parser("experiment", help="run a full experiment")
    ex.add_argument("kind", choices=("quadrature", "diffusion"))
    ex.add_argument("--config", default=None, help="JSON configuration file")
    ex.add_argument("--seed", type=int, default=None)
    ex.add_argument("--clusters", type=int, nargs="+", default=None)
    ex.add_argument("--order", type=int, nargs="+", default=None)
    ex.add_argument("--nodes-per-dim", type=int, default=None)
    ex.add_argument("--node-scope", choices=ma.NODE_SCOPES, default=None)
    ex.add_argument("--samples", type=int, default=None, help="size N of the clustering set")
    ex.add_argument("--out", default=None, help="output directory")
    ex.add_argument("--write-config", default=None, help="write the effective configuration and exit")
    ex.set_defaults(func=cmd_experiment)

    ep = sub.add_parser("export-plots", help="write plot data (CSV + SVG) from experiment reports")
    ep.add_argument("--results", required=True)
    ep.add_argument("--out", default=None)
    ep.set_defaults(func=cmd_export_plots)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConvergenceError, OracleError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
