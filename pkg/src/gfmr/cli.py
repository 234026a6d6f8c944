"""Command-line front end.

Subcommands
-----------
fit        joint solve from design/outcome CSVs; writes gamma.csv,
           fitted_means.csv, diagnostics.csv, manifest.txt
denoise    TV-denoise a single image CSV over a grid (or given) graph
graph      emit an edge-list file for a grid, optionally lag-augmented
simulate   run benchmark replicates and tabulate mean(sd) deviations
bootstrap  subject-resampling confidence bands around a fit
theory     print the graph constants and penalty scale for a bound check

Exit codes: 0 success, 2 malformed or shape-inconsistent input, 3 rank
deficiency, 4 ran without reaching the tolerance (outputs still written,
manifest says converged=false), 5 file I/O failure.  ``--threads 1`` (the
default unless GFMR_THREADS is set) makes every command bit-reproducible,
and each command writes a manifest.txt from which it can be rerun.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as gio
from .exceptions import GfmrError, RankDeficiencyError, ShapeMismatchError
from .fused import GflConfig, gfl_solve
from .graphs import IncidenceGraph, add_lag_edges, grid_graph, read_edge_list, write_edge_list
from .model import Dataset, TensorShape, matricize, vectorize
from .simulate import METHODS, SETTINGS, SimSpec, run_replicates, setting_graph
from .solver import SolverConfig, fit
from .theory import OracleBoundSpec, theorem_lambda

EXIT_OK = 0
EXIT_SHAPE = 2
EXIT_RANK = 3
EXIT_NOCONV = 4
EXIT_IO = 5


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GFMR_THREADS", "1")))
    except ValueError:
        return 1


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ValueError(f"bad --dims value {text!r}: {exc}") from None
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"--dims entries must be positive integers, got {text!r}")
    return dims


def _load_graph(args, M: int) -> IncidenceGraph:
    if getattr(args, "graph", None):
        return read_edge_list(args.graph, num_nodes=M)
    return grid_graph(args.dims)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        lam=args.lam,
        admm_penalty=args.rho,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        relax=args.relax,
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="fusion penalty weight (default 1.0)")
    p.add_argument("--rho", type=float, default=1.0,
                   help="ADMM penalty parameter (default 1.0)")
    p.add_argument("--relax", type=float, default=1.0,
                   help="over-relaxation weight in (0,2) (default 1.0)")
    p.add_argument("--tol", type=float, default=1e-4,
                   help="outer convergence tolerance (default 1e-4)")
    p.add_argument("--max-iter", type=int, default=200,
                   help="outer iteration cap (default 200)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", required=True, help="n x p design matrix CSV")
    p.add_argument("--outcome", required=True,
                   help="n x M outcome CSV, one vectorized subject per row")
    p.add_argument("--dims", type=_parse_dims, default=None,
                   help="outcome tensor dims, e.g. 40,40 (default: sidecar <outcome>.dims)")
    p.add_argument("--graph", default=None,
                   help="edge-list file (default: grid graph over --dims)")


def _load_dataset(args) -> Dataset:
    X = gio.read_matrix(args.design)
    Y = gio.read_matrix(args.outcome)
    if args.dims is None:
        sidecar = gio.dims_path(args.outcome)
        if not os.path.exists(sidecar):
            raise ValueError(f"--dims not given and no sidecar file {sidecar}")
        args.dims = gio.read_dims(sidecar)
    return Dataset(X=X, Y=Y, shape=TensorShape(args.dims))


def _write_fit_outputs(out_dir, data: Dataset, result, manifest: dict) -> None:
    gio.ensure_dir(out_dir)
    gio.write_matrix(os.path.join(out_dir, "gamma.csv"), result.Gamma)
    gio.write_matrix(os.path.join(out_dir, "fitted_means.csv"),
                     result.theta.reshape(data.n, data.shape.M))
    diag = result.diagnostics
    rows = np.column_stack([
        np.arange(1, result.iterations + 1, dtype=float),
        diag.rel_change, diag.feasibility, diag.objective,
    ])
    gio.write_matrix(os.path.join(out_dir, "diagnostics.csv"), rows)
    gio.write_manifest(os.path.join(out_dir, "manifest.txt"), manifest)


def cmd_fit(args) -> int:
    data = _load_dataset(args)
    g = _load_graph(args, data.shape.M)
    cfg = _solver_config(args)
    result = fit(data, g, cfg, threads=args.threads)
    manifest = {
        "command": "fit",
        "design": os.path.abspath(args.design),
        "outcome": os.path.abspath(args.outcome),
        "dims": ",".join(str(d) for d in args.dims),
        "graph": os.path.abspath(args.graph) if args.graph else "",
        "lambda": repr(cfg.lam),
        "rho": repr(cfg.admm_penalty),
        "relax": repr(cfg.relax),
        "tol": repr(cfg.tol),
        "max_iter": cfg.max_iter,
        "seed": cfg.seed,
        "threads": args.threads,
        "iterations": result.iterations,
        "converged": str(result.converged).lower(),
        "objective": repr(float(result.diagnostics.objective[-1])),
    }
    _write_fit_outputs(args.out_dir, data, result, manifest)
    return EXIT_OK if result.converged else EXIT_NOCONV


def cmd_denoise(args) -> int:
    img = gio.read_matrix(args.image)
    if args.dims is not None:
        # entries are taken in file order as an already-vectorized signal,
        # matching the one-row-per-subject outcome convention
        shape = TensorShape(args.dims)
        if img.size != shape.M:
            raise ShapeMismatchError(
                f"image has {img.size} entries but --dims implies {shape.M}"
            )
        y = img.ravel()
    elif img.shape[0] == 1:
        shape = TensorShape((img.shape[1],))
        y = img[0].copy()
    else:
        shape = TensorShape(img.shape)
        y = vectorize(img, shape)
    g = read_edge_list(args.graph, num_nodes=shape.M) if args.graph else grid_graph(shape.dims)
    sol = gfl_solve(g, y, args.lam, GflConfig(inner_tol=args.tol))
    out = matricize(sol.value, shape)
    gio.ensure_dir(args.out_dir)
    gio.write_matrix(os.path.join(args.out_dir, "denoised.csv"),
                     out if out.ndim <= 2 else sol.value)
    gio.write_manifest(os.path.join(args.out_dir, "manifest.txt"), {
        "command": "denoise",
        "image": os.path.abspath(args.image),
        "dims": ",".join(str(d) for d in shape.dims),
        "graph": os.path.abspath(args.graph) if args.graph else "",
        "lambda": repr(args.lam),
        "tol": repr(args.tol),
        "iterations": sol.iterations,
        "converged": str(sol.converged).lower(),
    })
    return EXIT_OK if sol.converged else EXIT_NOCONV


def cmd_graph(args) -> int:
    g = grid_graph(args.dims)
    if args.lag is not None:
        g = add_lag_edges(g, lag=args.lag, count=args.count)
    out = args.out or os.path.join(args.out_dir, "edges.txt")
    gio.ensure_dir(os.path.dirname(out) or ".")
    write_edge_list(g, out)
    print(f"wrote {g.num_edges} edges over {g.num_nodes} nodes to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}, expected one of {METHODS}")
    spec = SimSpec(setting=args.setting, n=args.n, replicates=args.replicates,
                   seed=args.seed, sigma=args.sigma)
    cfg = SolverConfig(lam=1.0, admm_penalty=args.rho, tol=args.tol,
                       max_iter=args.max_iter, seed=args.seed, relax=args.relax)
    grid = tuple(float(t) for t in args.grid.split(",")) if args.grid else None
    gio.ensure_dir(args.out_dir)
    lines = []
    for m in methods:
        summary = run_replicates(spec, m, lam=args.lam, grid=grid, cfg=cfg,
                                 threads=args.threads)
        formatted = f"{summary.mean:.3f}({summary.sd:.3f})"
        lines.append(f"{m},{spec.setting},{spec.n},{summary.lam!r},"
                     f"{summary.mean!r},{summary.sd!r},{formatted}")
        print(f"{m}: {formatted}  [lambda={summary.lam:g}, "
              f"failures={summary.failures}, nonconverged={summary.nonconverged}]")
    with open(os.path.join(args.out_dir, "results.csv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    gio.write_manifest(os.path.join(args.out_dir, "manifest.txt"), {
        "command": "simulate",
        "setting": spec.setting,
        "n": spec.n,
        "replicates": spec.replicates,
        "seed": spec.seed,
        "sigma": "" if args.sigma is None else repr(args.sigma),
        "method": ",".join(methods),
        "lambda": "" if args.lam is None else repr(args.lam),
        "grid": args.grid or "",
        "rho": repr(args.rho),
        "relax": repr(args.relax),
        "tol": repr(args.tol),
        "max_iter": args.max_iter,
        "threads": args.threads,
    })
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    from .simulate import bootstrap_ci

    data = _load_dataset(args)
    g = _load_graph(args, data.shape.M)
    cfg = _solver_config(args)
    res = bootstrap_ci(data, g, cfg, B=args.draws, level=args.level,
                       seed=args.seed, threads=args.threads)
    gio.ensure_dir(args.out_dir)
    gio.write_matrix(os.path.join(args.out_dir, "lower.csv"), res.lower)
    gio.write_matrix(os.path.join(args.out_dir, "upper.csv"), res.upper)
    gio.write_manifest(os.path.join(args.out_dir, "manifest.txt"), {
        "command": "bootstrap",
        "design": os.path.abspath(args.design),
        "outcome": os.path.abspath(args.outcome),
        "dims": ",".join(str(d) for d in args.dims),
        "graph": os.path.abspath(args.graph) if args.graph else "",
        "lambda": repr(cfg.lam),
        "rho": repr(cfg.admm_penalty),
        "relax": repr(cfg.relax),
        "tol": repr(cfg.tol),
        "max_iter": cfg.max_iter,
        "seed": cfg.seed,
        "threads": args.threads,
        "draws": args.draws,
        "level": repr(args.level),
        "nonconverged": res.nonconverged,
    })
    return EXIT_OK


def cmd_theory(args) -> int:
    if args.graph:
        g = read_edge_list(args.graph)
    elif args.dims:
        g = grid_graph(args.dims)
    else:
        raise ValueError("theory needs --graph or --dims")
    T = tuple(int(tok) for tok in args.active.split(","))
    spec = OracleBoundSpec(graph=g, n=args.n, sigma=args.sigma,
                           delta=args.delta, T=T)
    lam = theorem_lambda(spec)
    M, m, n = g.num_nodes, g.num_edges, args.n
    noise_term = float(64.0 * args.sigma**2 * np.log(2.0 * np.e * n * M / args.delta))
    graph_term = float(8.0 * spec.rho**2 * args.sigma**2
                       * np.log(m * n * M / args.delta) / spec.kappa**2 * len(T))
    print(f"nodes={M} edges={m} |T|={len(T)}")
    print(f"rho={spec.rho!r}")
    print(f"kappa={spec.kappa!r}")
    print(f"lambda={lam!r}")
    print(f"noise_term={noise_term!r}")
    print(f"graph_term={graph_term!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfmr",
        description="TV-penalized regression of array outcomes over a graph",
    )
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: GFMR_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit coefficient maps from CSV inputs")
    _add_io_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("denoise", help="TV-denoise one image")
    p.add_argument("--image", required=True, help="image CSV (2-D, or one row for a chain)")
    p.add_argument("--dims", type=_parse_dims, default=None,
                   help="tensor dims when the CSV layout is not the tensor itself")
    p.add_argument("--graph", default=None, help="edge-list file (default: grid)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("graph", help="write a grid-graph edge list")
    p.add_argument("--dims", type=_parse_dims, required=True)
    p.add_argument("--lag", type=int, default=None,
                   help="also tie node i to node i+LAG")
    p.add_argument("--count", type=int, default=None,
                   help="number of lag ties (with --lag)")
    p.add_argument("--out", default=None, help="output file (default: out-dir/edges.txt)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("simulate", help="run benchmark replicates")
    p.add_argument("--setting", required=True, choices=SETTINGS)
    p.add_argument("--n", type=int, required=True, help="subjects per replicate")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--method", default="gfmr",
                   help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed penalty (default: cross-validate on replicate 0)")
    p.add_argument("--grid", default=None, help="comma-separated CV grid")
    p.add_argument("--sigma", type=float, default=None, help="noise sd override")
    p.add_argument("--rho", type=float, default=5.0,
                   help="ADMM penalty parameter (default 5.0 at benchmark scale)")
    p.add_argument("--relax", type=float, default=1.8,
                   help="over-relaxation weight (default 1.8)")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bootstrap", help="bootstrap bands for coefficient maps")
    _add_io_flags(p)
    _add_solver_flags(p)
    p.add_argument("--draws", type=int, default=100, help="bootstrap draws (default 100)")
    p.add_argument("--level", type=float, default=0.95, help="band level (default 0.95)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("theory", help="print bound constants for a graph")
    p.add_argument("--graph", default=None, help="edge-list file")
    p.add_argument("--dims", type=_parse_dims, default=None, help="grid dims instead of --graph")
    p.add_argument("--active", required=True,
                   help="comma-separated edge indices forming the active set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.set_defaults(func=cmd_theory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ShapeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except RankDeficiencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (ValueError, GfmrError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
