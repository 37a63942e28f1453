"""Command line entry point.

Exit codes: 0 success, 2 usage or configuration error (including missing
input files), 3 malformed or inconsistent data, 4 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .core import build_grid_graph
from .errors import FormatError, SolverError
from .gcn import GcnConfig, gcn_experiment
from .random_walk import RunResult, RwConfig, rw_experiment
from .watershed import EswConfig, esw_edge_weights, resolve_workers, subset_distance_histogram

log = logging.getLogger("eswgraph")

EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _config(factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _load(reader, path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return reader(path)
    except (FormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _int_list(text):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


class RunLog:
    """Append one JSON object per line to ``path`` (no-op without a path)."""

    def __init__(self, path, command, params):
        self.fh = open(path, "a") if path else None
        params = {k: v for k, v in params.items() if k != "func"}
        blob = json.dumps(params, sort_keys=True, default=str).encode()
        self.base = {"command": command, "config_hash": hashlib.sha256(blob).hexdigest()[:16]}

    def write(self, **record):
        if self.fh:
            self.fh.write(json.dumps({**self.base, **record}, sort_keys=True) + "\n")

    def close(self):
        if self.fh:
            self.fh.close()


def _load_pair(cube_path, gt_path):
    cube = _load(io.read_cube, cube_path)
    gt, nr, nc = _load(io.read_groundtruth, gt_path)
    if (nr, nc) != (cube.nr, cube.nc):
        raise DataError(f"groundtruth is {nr}x{nc} but the cube is {cube.nr}x{cube.nc}")
    return cube, gt


def _load_weights(path, cube):
    weights, nr, nc = _load(io.read_weights, path)
    if (nr, nc) != (cube.nr, cube.nc):
        raise DataError(f"weights are for {nr}x{nc} but the cube is {cube.nr}x{cube.nc}")
    return weights


def _esw_config(args):
    return _config(EswConfig, args.repeats, args.kappa_f, args.kappa_v, args.seed)


def cmd_synth(args):
    spec = _config(io.SynthSpec, args.nr, args.nc, args.nz, args.classes, args.layout, args.rho,
                   args.sigma, args.separation, args.seed, args.sites)
    cube, gt = _config(io.synth_cube, spec)
    io.write_cube(cube, args.cube)
    io.write_groundtruth(gt, cube.nr, cube.nc, args.gt)
    log.info("wrote %s and %s", args.cube, args.gt)


def cmd_esw(args):
    config = _esw_config(args)
    workers = _config(resolve_workers, args.workers)
    cube = _load(io.read_cube, args.cube)
    graph = build_grid_graph(cube.nr, cube.nc)
    config = _config(config.resolve, cube.nz, graph.n_vertices)
    start = time.perf_counter()
    weights = esw_edge_weights(cube, graph, config, workers)
    io.write_weights(weights, cube.nr, cube.nc, args.out)
    log.info("ESW weights (N=%d, kappa_f=%d, kappa_v=%d) in %.1f s -> %s", config.n_repeats,
             config.kappa_f, config.kappa_v, time.perf_counter() - start, args.out)


def _weights_or_estimate(args, cube, graph, workers):
    if args.weights:
        return _load_weights(args.weights, cube)
    config = _config(_esw_config(args).resolve, cube.nz, graph.n_vertices)
    return esw_edge_weights(cube, graph, config, workers)


def _mean_curves(results):
    curves = {}
    for r in results:
        curves.setdefault(r.method, {}).setdefault(r.x, []).append(r.oa)
    return {m: (sorted(pts), [float(np.mean(pts[x])) for x in sorted(pts)])
            for m, pts in curves.items()}


def cmd_rw_eval(args):
    rw = _config(RwConfig, "esw", args.beta, args.epsilon, args.cg_tol, args.cg_max_iter)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    workers = _config(resolve_workers, args.workers)
    _esw_config(args)
    cube, gt = _load_pair(args.cube, args.gt)
    graph = build_grid_graph(cube.nr, cube.nc)
    esw = _weights_or_estimate(args, cube, graph, workers)

    runlog = RunLog(args.log, "rw-eval", vars(args))
    results = []
    try:
        for spc in args.seeds:
            batch = rw_experiment(cube, graph, gt, esw, rw, spc, args.trials, args.seed)
            for r in batch:
                runlog.write(method=r.method, trial=r.trial, seeds_per_class=r.x, oa=r.oa,
                             wall_ms=r.wall_ms)
            results.extend(batch)
    finally:
        runlog.close()
    for method, (xs, ys) in _mean_curves(results).items():
        log.info("%-10s %s", method, " ".join(f"{x}:{y:.4f}" for x, y in zip(xs, ys)))
    _emit(args, results, xlabel="seeds per class", title="Random-walk overall accuracy")


def cmd_gcn_eval(args):
    config = _config(GcnConfig, args.max_steps, args.repeats, args.clusters, args.knn,
                     args.restarts, args.subsample, args.seed, args.beta)
    cube, gt = _load_pair(args.cube, args.gt)
    variants = [("unweighted", None)]
    if args.weights:
        variants.append(("weighted", _load_weights(args.weights, cube)))
    graph = build_grid_graph(cube.nr, cube.nc)

    runlog = RunLog(args.log, "gcn-eval", vars(args))
    results, curves = [], {}
    try:
        for name, weights in variants:
            start = time.perf_counter()
            out = gcn_experiment(cube, graph, gt, weights, config)
            per_cell = (time.perf_counter() - start) * 1e3 / out.oa.size
            for rep in range(config.repeats):
                for k in range(config.max_steps):
                    r = RunResult(name, rep, k + 1, float(out.oa[rep, k]), per_cell, "iteration")
                    results.append(r)
                    runlog.write(method=name, trial=rep, iteration=k + 1, oa=r.oa,
                                 wall_ms=per_cell)
            curves[name] = (list(range(1, config.max_steps + 1)), out.mean_best.tolist())
            log.info("%-10s mean best OA %.4f", name, out.mean_best[-1])
    finally:
        runlog.close()
    _emit(args, results, curves, xlabel="iteration", title="Best OA up to iteration")


def _emit(args, results, curves=None, **labels):
    if args.csv:
        io.write_results_csv(results, args.csv, timing=not args.no_timing)
    if args.svg:
        io.write_curve_svg(curves or _mean_curves(results), args.svg, **labels)


def cmd_hist(args):
    config = _esw_config(args)
    cube, gt = _load_pair(args.cube, args.gt)
    graph = build_grid_graph(cube.nr, cube.nc)
    try:
        samples = subset_distance_histogram(cube, graph, gt, config)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    edges, same, diff = samples.histogram(args.bins)
    with open(args.csv, "w") as fh:
        fh.write("bin_lo,bin_hi,same_class,different_class\n")
        for lo, hi, s, d in zip(edges[:-1], edges[1:], same, diff):
            fh.write(f"{lo:.6g},{hi:.6g},{s},{d}\n")


def cmd_viz(args):
    weights, nr, nc = _load(io.read_weights, args.weights)
    io.export_cubical_pgm(build_grid_graph(nr, nc), weights, args.out)


def _add_esw_flags(p, with_seed=True):
    g = p.add_argument_group("ESW estimation")
    g.add_argument("--repeats", type=int, default=100, help="ensemble size N (default 100)")
    g.add_argument("--kappa-f", type=int, default=None, help="bands per watershed")
    g.add_argument("--kappa-v", type=int, default=None, help="seeds per watershed")
    if with_seed:
        g.add_argument("--seed", type=int, default=0, help="master seed")


def _add_output_flags(p):
    p.add_argument("--csv", help="per-trial results CSV")
    p.add_argument("--svg", help="curve plot")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall_ms empty in the CSV so reruns are byte-identical")
    p.add_argument("--log", help="append a JSON line per trial to this file")


def build_parser():
    parser = argparse.ArgumentParser(prog="eswgraph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic cube and groundtruth")
    p.add_argument("--nr", type=int, default=32)
    p.add_argument("--nc", type=int, default=32)
    p.add_argument("--nz", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--layout", choices=[m.value for m in io.Layout], default="voronoi")
    p.add_argument("--sites", type=int, default=None, help="Voronoi cells (default 3 per class)")
    p.add_argument("--rho", type=float, default=0.5, help="fraction of bands shared by classes")
    p.add_argument("--sigma", type=float, default=0.2, help="pixel noise standard deviation")
    p.add_argument("--separation", type=float, default=1.0, help="class gap on distinct bands")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cube", default="synth.hsic")
    p.add_argument("--gt", default="synth.hsig")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("esw", help="estimate ESW edge-weights")
    p.add_argument("cube")
    p.add_argument("-o", "--out", required=True)
    _add_esw_flags(p)
    p.add_argument("--workers", type=int, default=None, help="processes (default $ESW_WORKERS or 1)")
    p.set_defaults(func=cmd_esw)

    p = sub.add_parser("rw-eval", help="random-walk accuracy versus seeds per class")
    p.add_argument("cube")
    p.add_argument("gt")
    p.add_argument("--weights", help="ESW weight file; estimated on the fly when omitted")
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 5, 10],
                   help="comma-separated seeds-per-class grid")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--cg-max-iter", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    _add_esw_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_rw_eval)

    p = sub.add_parser("gcn-eval", help="graph-convolution clustering accuracy per iteration")
    p.add_argument("cube")
    p.add_argument("gt")
    p.add_argument("--weights", help="ESW weight file for the weighted variant")
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    _add_output_flags(p)
    p.set_defaults(func=cmd_gcn_eval)

    p = sub.add_parser("hist", help="subset-distance histograms for same/different class edges")
    p.add_argument("cube")
    p.add_argument("gt")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--csv", required=True)
    _add_esw_flags(p)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("viz", help="render edge-weights as a cubical-complex PGM")
    p.add_argument("weights")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"eswgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, ValueError) as exc:
        print(f"eswgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"eswgraph: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return 0


if __name__ == "__main__":
    sys.exit(main())
