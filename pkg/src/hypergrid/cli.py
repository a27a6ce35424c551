"""Command line bench over the library.

Every subcommand is a thin shell around one library operation: parse
flags, call the operation, serialize the result.  Tabular results go to
stdout as an aligned table by default; ``--format csv`` and ``--format
json`` switch to machine-readable output (the kd benchmark defaults to
csv, its natural consumer being a plotting script).  Diagnostics,
progress, and verbose statistics go to stderr so pipelines stay clean.

Exit codes: 0 success, 1 usage error (usage text printed), 2 data or
index error (one-line diagnostic printed).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
import uvicorn

from . import __version__
from .cluster import build_bst, cell_density, evaluate_purity, point_labels
from .dataset import (
    BoundingBox,
    PointSet,
    apply_transform,
    fit_pca,
    fit_whitening,
    generate_mixture,
    load,
    random_components,
    save,
)
from .errors import HypergridError
from .estimate import FitConfig, estimate_all, evaluate_estimator
from .grid import DEFAULT_BASE, build_grid, load_grid, sample_box, save_grid
from .kdtree import (
    Polytope,
    build_kdtree,
    load_kdtree,
    query_polytope,
    save_kdtree,
    selectivity_curve,
)
from .knn import knn_search
from .service import create_app, load_config, resolve_listen
from .voronoi import build_voronoi, load_voronoi, locate_cell, save_voronoi

# two-word commands accepted as "voronoi build", parsed as "voronoi-build"
_SUBSPLIT = {
    "voronoi": ("build", "locate", "density"),
    "estimate": ("eval",),
    "bench": ("kd",),
}


def _flatten_subcommands(argv: list[str]) -> list[str]:
    """Merge a two-word subcommand into its hyphenated parser name."""
    if len(argv) >= 2 and argv[1] in _SUBSPLIT.get(argv[0], ()):
        return [f"{argv[0]}-{argv[1]}", *argv[2:]]
    return list(argv)


# ---------------------------------------------------------------------------
# serialization


def _plain(value):
    """Numpy scalar to native Python, everything else untouched."""
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _emit(args, columns, rows) -> None:
    """Write rows to stdout in the format the flags asked for."""
    rows = [[_plain(v) for v in row] for row in rows]
    if args.format == "json":
        json.dump([dict(zip(columns, row)) for row in rows], sys.stdout)
        sys.stdout.write("\n")
    elif args.format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(columns)
        writer.writerows(rows)
    else:
        cells = [[_cell(v) for v in row] for row in rows]
        widths = [max(len(name), *(len(r[i]) for r in cells)) if cells else len(name)
                  for i, name in enumerate(columns)]
        print("  ".join(name.ljust(w) for name, w in zip(columns, widths)).rstrip())
        for row in cells:
            print("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())


def _note(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _save_points(points: PointSet, path: str) -> None:
    save(points, path, fmt="csv" if path.endswith(".csv") else "binary")


def _parse_box(text: str) -> BoundingBox:
    """Parse 'lo1,..,loD:hi1,..,hiD' into a box."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"box must be 'lo1,..,loD:hi1,..,hiD', got {text!r}")
    try:
        lo = np.array([float(v) for v in parts[0].split(",")])
        hi = np.array([float(v) for v in parts[1].split(",")])
    except ValueError:
        raise ValueError(f"box corners must be numeric, got {text!r}") from None
    if lo.shape != hi.shape:
        raise ValueError("box corners differ in dimension")
    return BoundingBox(lo, hi)


def _parse_coords(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"coordinates must be comma-separated numbers, got {text!r}") from None


def _load_halfspaces(path: str) -> Polytope:
    """Polytope from a csv of rows n1,..,nD,offset."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one normal component and an offset")
    return Polytope(data[:, :-1], data[:, -1])


def _region(args) -> Polytope:
    """Polytope from --box and/or --halfspaces, intersected when both given."""
    pieces = []
    if args.box is not None:
        pieces.append(Polytope.from_box(_parse_box(args.box)))
    if args.halfspaces is not None:
        pieces.append(_load_halfspaces(args.halfspaces))
    if not pieces:
        raise ValueError("give --box, --halfspaces, or both")
    if len(pieces) == 1:
        return pieces[0]
    if pieces[0].dim != pieces[1].dim:
        raise ValueError("--box and --halfspaces dimensions differ")
    return Polytope(np.vstack([p.normals for p in pieces]),
                    np.concatenate([p.offsets for p in pieces]))


def _tree_for(args, points: PointSet):
    if getattr(args, "tree", None):
        return load_kdtree(args.tree)
    return build_kdtree(points)


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_generate(args) -> int:
    components = random_components(args.dim, args.components, args.seed,
                                   separation=args.separation, stdev=args.stdev)
    points = generate_mixture(args.n, args.dim, components, args.seed + 1,
                              outlier_fraction=args.outliers)
    _save_points(points, args.output)
    _note(args, f"wrote {points.n} points of dim {points.dim} to {args.output}")
    return 0


def _cmd_import(args) -> int:
    points = load(args.input)
    _save_points(points, args.output)
    _note(args, f"copied {points.n} points to {args.output}")
    return 0


def _cmd_pca(args) -> int:
    points = load(args.input)
    transform = fit_pca(points, args.components)
    _save_points(apply_transform(transform, points), args.output)
    variances = ", ".join(f"{v:.6g}" for v in transform.explained_variance)
    _note(args, f"explained variance per component: {variances}")
    return 0


def _cmd_whiten(args) -> int:
    points = load(args.input)
    _save_points(apply_transform(fit_whitening(points), points), args.output)
    return 0


def _cmd_grid_build(args) -> int:
    points = load(args.input)
    coord_indices = tuple(int(c) for c in args.coords.split(","))
    grid = build_grid(points, coord_indices=coord_indices, base=args.base,
                      seed=args.seed)
    save_grid(grid, args.output)
    _note(args, f"{len(grid.layers)} layers over {points.n} points")
    return 0


def _cmd_sample(args) -> int:
    points = load(args.input)
    grid = load_grid(args.grid)
    ids, stats = sample_box(grid, points, _parse_box(args.box), args.n,
                            with_stats=True)
    _note(args, f"examined {stats.examined} ids across {stats.layers_read} layers")
    columns = ["id"] + [f"x{j}" for j in range(points.dim)]
    rows = [[int(i), *points.coords[i]] for i in ids]
    if points.targets is not None:
        columns.append("target")
        for row, i in zip(rows, ids):
            row.append(float(points.targets[i]))
    _emit(args, columns, rows)
    return 0


def _cmd_kd_build(args) -> int:
    points = load(args.input)
    tree = build_kdtree(points)
    save_kdtree(tree, args.output)
    _note(args, f"{tree.n_leaves} leaves, depth {tree.depth}")
    return 0


def _cmd_query(args) -> int:
    points = load(args.input)
    tree = _tree_for(args, points)
    ids, stats = query_polytope(tree, points, _region(args), with_stats=True)
    _note(args, f"returned {stats.returned} points, tested {stats.tested}, "
                f"{stats.inside_nodes} subtrees fully inside")
    _emit(args, ["id"] + [f"x{j}" for j in range(points.dim)],
          [[int(i), *points.coords[i]] for i in ids])
    return 0


def _cmd_knn(args) -> int:
    points = load(args.input)
    tree = _tree_for(args, points)
    result = knn_search(tree, points, _parse_coords(args.query), args.k)
    _emit(args, ["rank", "id", "distance"],
          [[rank, int(i), float(d)]
           for rank, (i, d) in enumerate(zip(result.ids, result.distances))])
    return 0


def _cmd_voronoi_build(args) -> int:
    points = load(args.input)
    index = build_voronoi(points, args.seeds, seed=args.seed,
                          probe_budget=args.probe_budget,
                          volume_samples=args.volume_samples)
    save_voronoi(index, args.output)
    _note(args, f"{index.n_cells} cells over {points.n} points")
    return 0


def _cmd_voronoi_locate(args) -> int:
    index = load_voronoi(args.index)
    result = locate_cell(index, _parse_coords(args.query))
    _emit(args, ["cell", "walk_cell", "steps", "walk_missed"],
          [[result.cell, result.walk_cell, result.steps, result.walk_missed]])
    return 0


def _cmd_voronoi_density(args) -> int:
    index = load_voronoi(args.index)
    density, fallback = cell_density(index, args.mode)
    counts = index.cell_counts()
    _emit(args, ["cell", "density", "volume", "count", "fallback"],
          [[c, float(density[c]), float(index.volumes[c]), int(counts[c]),
            bool(fallback[c])] for c in range(index.n_cells)])
    return 0


def _cmd_cluster(args) -> int:
    points = load(args.input)
    index = build_voronoi(points, args.nseed, seed=args.seed)
    forest = build_bst(index, mode=args.mode, merge_tau=args.merge_tau)
    labels = point_labels(forest, index)
    if points.labels is not None:
        purity = evaluate_purity(points.labels, labels)
        print(f"purity {purity:.6g} over {forest.n_clusters} clusters",
              file=sys.stderr)
    _emit(args, ["point", "cluster"],
          [[i, int(c)] for i, c in enumerate(labels)])
    return 0


def _cmd_estimate(args) -> int:
    ref = load(args.ref)
    unknown = load(args.unknown)
    cfg = FitConfig(k=args.k, order=args.order, ridge=args.ridge)
    progress = None
    if args.verbose:
        progress = lambda done, total: print(f"{done}/{total}", file=sys.stderr)
    batch = estimate_all(ref, unknown, cfg, progress=progress,
                         workers=args.threads)
    if args.output:
        _save_points(PointSet(unknown.coords, unknown.labels, batch.estimates),
                     args.output)
        _note(args, f"wrote {unknown.n} estimates to {args.output}")
        return 0
    _emit(args, ["point", "estimate", "flagged"],
          [[i, float(e), bool(f)]
           for i, (e, f) in enumerate(zip(batch.estimates, batch.condition_flags))])
    return 0


def _cmd_estimate_eval(args) -> int:
    ref = load(args.ref)
    report = evaluate_estimator(
        ref,
        FitConfig(k=args.k_a, order=args.order_a),
        FitConfig(k=args.k_b, order=args.order_b),
        folds=args.folds, seed=args.seed, bootstrap=args.bootstrap)
    columns = ["rms_a", "mae_a", "rms_b", "mae_b", "improvement_percent",
               "ci_low", "ci_high", "folds", "n_points"]
    _emit(args, columns, [[getattr(report, c) for c in columns]])
    return 0


def _cmd_bench_kd(args) -> int:
    if args.input:
        points = load(args.input)
    else:
        components = random_components(args.dim, args.components, args.seed,
                                       separation=8.0)
        points = generate_mixture(args.n, args.dim, components, args.seed + 1,
                                  outlier_fraction=0.01)
        _note(args, f"generated {points.n} points of dim {points.dim}")
    targets = [float(s) for s in args.selectivities.split(",")]
    tree = _tree_for(args, points)
    rows = selectivity_curve(tree, points, targets, seed=args.seed,
                             cuts=args.cuts, repeats=args.repeats)
    columns = ["target", "selectivity", "returned", "tested",
               "tested_per_returned", "speedup", "query_seconds", "scan_seconds"]
    _emit(args, columns, [[getattr(r, c) for c in columns] for r in rows])
    return 0


def _cmd_serve(args) -> int:
    config = load_config(args.config)
    host, port = resolve_listen(config)
    app = create_app(config)
    print(f"serving {len(config.datasets)} dataset(s) on {host}:{port}",
          file=sys.stderr)
    uvicorn.run(app, host=host, port=port,
                log_level="info" if args.verbose else "warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypergrid",
        description="Build, query, and serve spatial indexes over large point sets.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, handler, help_, default_format="table"):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(handler=handler)
        p.add_argument("--seed", type=int, default=0,
                       help="seed for every random choice (default 0)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads where supported (default 1)")
        p.add_argument("--verbose", action="store_true",
                       help="progress and statistics on stderr")
        p.add_argument("--format", choices=("table", "csv", "json"),
                       default=default_format,
                       help=f"stdout serialization (default {default_format})")
        return p

    p = command("generate", _cmd_generate,
                "Draw a clustered synthetic point set and write it to a file.")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--dim", type=int, required=True, help="dimensions")
    p.add_argument("--components", type=int, required=True,
                   help="mixture components")
    p.add_argument("--separation", type=float, default=6.0,
                   help="component center spacing in stdev units")
    p.add_argument("--stdev", type=float, default=1.0,
                   help="base per-axis scatter")
    p.add_argument("--outliers", type=float, default=0.0,
                   help="uniform outlier fraction in [0, 1)")
    p.add_argument("-o", "--output", required=True,
                   help="output file (.csv for text, anything else binary)")

    p = command("import", _cmd_import,
                "Convert a point file between the csv and binary formats.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = command("pca", _cmd_pca,
                "Project points onto their leading principal components.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--components", type=int, required=True,
                   help="output dimensions")

    p = command("whiten", _cmd_whiten,
                "Rescale points to unit per-dimension variance.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = command("grid-build", _cmd_grid_build,
                "Build the layered sampling grid over three columns.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--base", type=int, default=DEFAULT_BASE,
                   help=f"capacity of the first layer (default {DEFAULT_BASE})")
    p.add_argument("--coords", default="0,1,2",
                   help="the three indexed columns (default 0,1,2)")

    p = command("sample", _cmd_sample,
                "Density-faithful sample of at least n points in a box.")
    p.add_argument("-i", "--input", required=True, help="point file")
    p.add_argument("--grid", required=True, help="grid file")
    p.add_argument("--box", required=True,
                   help="lo1,lo2,lo3:hi1,hi2,hi3 (write --box=-1,.. when "
                        "the first corner is negative)")
    p.add_argument("--n", type=int, required=True, help="minimum sample size")

    p = command("kd-build", _cmd_kd_build,
                "Build the balanced kd-tree and write it to a file.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = command("query", _cmd_query,
                "All points inside a convex region, exactly.")
    p.add_argument("-i", "--input", required=True, help="point file")
    p.add_argument("--tree", help="kd-tree file (default: build in memory)")
    p.add_argument("--box",
                   help="lo1,..,loD:hi1,..,hiD (write --box=-1,.. when "
                        "the first corner is negative)")
    p.add_argument("--halfspaces",
                   help="csv of halfspace rows n1,..,nD,offset")

    p = command("knn", _cmd_knn,
                "The k nearest points to a query, with distances.")
    p.add_argument("-i", "--input", required=True, help="point file")
    p.add_argument("--tree", help="kd-tree file (default: build in memory)")
    p.add_argument("--query", required=True, help="comma-separated coordinates")
    p.add_argument("--k", type=int, required=True)

    p = command("voronoi-build", _cmd_voronoi_build,
                "Build the sampled cell map and write it to a file.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seeds", type=int, required=True, help="number of cells")
    p.add_argument("--probe-budget", type=int, default=None,
                   help="extra adjacency probes (default scales with --seeds)")
    p.add_argument("--volume-samples", type=int, default=None,
                   help="volume draws (default scales with --seeds)")

    p = command("voronoi-locate", _cmd_voronoi_locate,
                "Cell containing a query point, by greedy walk plus check.")
    p.add_argument("--index", required=True, help="cell map file")
    p.add_argument("--query", required=True, help="comma-separated coordinates")

    p = command("voronoi-density", _cmd_voronoi_density,
                "Per-cell density, volume, and membership count.")
    p.add_argument("--index", required=True, help="cell map file")
    p.add_argument("--mode", choices=("count", "volume"), default="count",
                   help="density definition (default count)")

    p = command("cluster", _cmd_cluster,
                "Cluster points by basins of the cell density landscape.")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--nseed", type=int, required=True, help="number of cells")
    p.add_argument("--merge-tau", type=float, default=None,
                   help="saddle ratio in [0,1] above which basins merge")
    p.add_argument("--mode", choices=("count", "volume"), default="count",
                   help="density definition (default count)")

    p = command("estimate", _cmd_estimate,
                "Estimate scalar targets for unknown points from a reference set.")
    p.add_argument("--ref", required=True, help="points with known targets")
    p.add_argument("--unknown", required=True, help="points to estimate")
    p.add_argument("--k", type=int, default=None,
                   help="neighbours per fit (default scales with dim)")
    p.add_argument("--order", type=int, default=1, choices=(0, 1, 2),
                   help="polynomial order (default 1)")
    p.add_argument("--ridge", type=float, default=1e-9,
                   help="relative ridge strength (default 1e-9)")
    p.add_argument("-o", "--output",
                   help="write the unknown set with a targets column here "
                        "instead of printing rows")

    p = command("estimate-eval", _cmd_estimate_eval,
                "Cross-validated comparison of two estimator configurations.")
    p.add_argument("--ref", required=True, help="points with known targets")
    p.add_argument("--k-a", type=int, default=None)
    p.add_argument("--order-a", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--k-b", type=int, default=None)
    p.add_argument("--order-b", type=int, default=1, choices=(0, 1, 2))
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--bootstrap", type=int, default=1000)

    p = command("bench-kd", _cmd_bench_kd,
                "Region-query speedup versus a full scan across selectivities.",
                default_format="csv")
    p.add_argument("--selectivities", required=True,
                   help="comma-separated target fractions in (0, 1]")
    p.add_argument("-i", "--input", help="point file (default: generated)")
    p.add_argument("--tree", help="kd-tree file (default: build in memory)")
    p.add_argument("--n", type=int, default=100_000,
                   help="generated workload size (default 100000)")
    p.add_argument("--dim", type=int, default=5,
                   help="generated workload dimensions (default 5)")
    p.add_argument("--components", type=int, default=8,
                   help="generated workload components (default 8)")
    p.add_argument("--cuts", type=int, default=0,
                   help="oblique halfspaces added to each query box (default 0)")
    p.add_argument("--repeats", type=int, default=1,
                   help="timing repetitions, fastest kept (default 1)")

    p = command("serve", _cmd_serve,
                "Serve configured datasets over HTTP until interrupted.")
    p.add_argument("--config", required=True, help="ini file of datasets")

    return parser


def main(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    raw = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_flatten_subcommands(raw))
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except BrokenPipeError:
        # Downstream closed the pipe (e.g. | head); exit quietly.  stdout is
        # redirected so the interpreter's final flush cannot raise again.
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 1
    except (HypergridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
