"""Sampled Voronoi maps: cells, adjacency, volumes, and spatial order.

A Voronoi index partitions space around a set of seed points: every
location belongs to its nearest seed (ties to the smaller seed id).
Cells adapt to the data by construction: dense regions get many small
cells, empty regions few large ones, so per-cell point count divided by
cell volume is a local density estimate.

Everything here is sampled rather than constructed combinatorially,
which is what keeps it usable in any dimension:

- adjacency comes from witness probes: a probe point whose nearest and
  second-nearest seeds are (a, b) testifies that cells a and b share a
  face.  With enough probes this recovers the neighbour graph without
  ever building the geometric diagram;
- cell volumes come from Monte Carlo counts over a sampling box;
- point location walks greedily along the adjacency graph to a local
  distance minimum, then verifies against the exact nearest seed.

Cells are ordered along an interleaved-bit (Morton) space filling curve
so that consecutive cells in storage are spatial neighbours; in more
than three dimensions the curve runs through the three leading
principal directions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import BoundingBox, PointSet, bounding_box, fit_pca, apply_transform
from .errors import FormatError
from .kdtree import KdTree, Polytope, build_kdtree, _classify_boxes
from .knn import knn_search

VORONOI_MAGIC = b"HGVR"
VORONOI_VERSION = 1

_MORTON_BITS = 21


@dataclass(frozen=True)
class LocateResult:
    """Outcome of one point location."""

    cell: int          # exact nearest seed
    walk_cell: int     # where the greedy walk stopped
    steps: int
    walk_missed: bool  # walk stopped in a different cell than the exact answer


@dataclass(frozen=True)
class VoronoiQueryStats:
    """Work accounting for one polytope query over the cell map."""

    returned: int
    tested: int          # member points checked individually
    cells_inside: int
    cells_outside: int
    cells_partial: int
    sampled: int         # members tested during the per-cell sampling pass
    sample_hits: int     # of those, how many were inside


class VoronoiIndex:
    """Seeds, per-point assignment, adjacency, volumes, and cell order.

    Build with :func:`build_voronoi`.  Adjacency and per-cell members are
    stored in CSR layout (indptr/indices pairs).
    """

    def __init__(self, seeds, seed_ids, assignment, adj_indptr, adj_indices,
                 volumes, volume_se, volume_counts, volume_samples, box, cell_order):
        self.seeds = seeds
        self.seed_ids = seed_ids
        self.assignment = assignment
        self.adj_indptr = adj_indptr
        self.adj_indices = adj_indices
        self.volumes = volumes
        self.volume_se = volume_se
        self.volume_counts = volume_counts
        self.volume_samples = int(volume_samples)
        self.box = box
        self.cell_order = cell_order
        for arr in (seeds, seed_ids, assignment, adj_indptr, adj_indices,
                    volumes, volume_se, volume_counts, cell_order):
            arr.flags.writeable = False

        # members of each cell, CSR over sorted assignment
        order = np.argsort(assignment, kind="stable")
        self.members_ids = order
        self.members_indptr = np.searchsorted(assignment[order],
                                              np.arange(self.n_cells + 1))

    @property
    def n_cells(self) -> int:
        return self.seeds.shape[0]

    @property
    def dim(self) -> int:
        return self.seeds.shape[1]

    @property
    def n_points(self) -> int:
        return self.assignment.shape[0]

    def neighbors(self, cell: int) -> np.ndarray:
        """Adjacent cell ids, ascending."""
        return self.adj_indices[self.adj_indptr[cell]:self.adj_indptr[cell + 1]]

    def members(self, cell: int) -> np.ndarray:
        """Point ids assigned to `cell`."""
        return self.members_ids[self.members_indptr[cell]:self.members_indptr[cell + 1]]

    def cell_counts(self) -> np.ndarray:
        """Number of points per cell."""
        return np.diff(self.members_indptr)


# ---------------------------------------------------------------------------
# construction pieces


def pick_seeds(points: PointSet, n_seed: int, seed: int = 0) -> np.ndarray:
    """Uniform sample without replacement of n_seed point ids."""
    if not 1 <= n_seed <= points.n:
        raise ValueError(f"n_seed must be in [1, {points.n}]")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(points.n, size=n_seed, replace=False)).astype(np.int64)


def assign_cells(points: PointSet, seeds: np.ndarray,
                 tree: KdTree | None = None) -> np.ndarray:
    """Exact nearest seed of every point, ties to the smaller seed id.

    Runs one k=1 search per point against a kd-tree over the seeds, so
    assignment cost grows with sqrt of the seed count rather than the
    seed count itself.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    if seeds.ndim != 2 or seeds.shape[1] != points.dim:
        raise ValueError("seeds must be (S, dim)")
    n_seed = seeds.shape[0]
    if n_seed == 1:
        return np.zeros(points.n, dtype=np.int64)
    seed_points = PointSet(seeds)
    if tree is None:
        tree = build_kdtree(seed_points)
    out = np.empty(points.n, dtype=np.int64)
    coords = points.coords
    for i in range(points.n):
        out[i] = knn_search(tree, seed_points, coords[i], 1).ids[0]
    return out


def _nearest_two_chunked(queries: np.ndarray, seeds: np.ndarray,
                         chunk: int = 4096):
    """Exact (nearest, second nearest) seed of each query by full scan.

    Nearest ties resolve to the smallest seed id; the second slot may
    break exact distance ties arbitrarily (three or more seeds at the
    same distance sit on a measure-zero boundary).  Yields
    (start, nearest, second) per chunk of queries.
    """
    seed_sq = (seeds * seeds).sum(axis=1)
    single = seeds.shape[0] == 1
    for s in range(0, queries.shape[0], chunk):
        q = queries[s:s + chunk]
        d2 = (q * q).sum(axis=1)[:, None] + seed_sq - 2.0 * (q @ seeds.T)
        if single:
            zero = np.zeros(q.shape[0], dtype=np.int64)
            yield s, zero, zero
            continue
        two = np.argpartition(d2, 1, axis=1)[:, :2]
        pair_d = np.take_along_axis(d2, two, axis=1)
        # order the pair by (distance, id)
        swap = (pair_d[:, 0] > pair_d[:, 1]) | (
            (pair_d[:, 0] == pair_d[:, 1]) & (two[:, 0] > two[:, 1]))
        first = np.where(swap, two[:, 1], two[:, 0])
        second = np.where(swap, two[:, 0], two[:, 1])
        # argpartition breaks distance ties arbitrarily; fix the nearest
        # by scanning for the smallest id at the minimum distance (the
        # displaced id is at that same distance, so it becomes second)
        dmin = np.take_along_axis(d2, first[:, None], axis=1)[:, 0]
        tied = d2 <= dmin[:, None]
        first_tied = tied.argmax(axis=1)  # smallest tied id
        retie = first_tied != first
        if retie.any():
            second = np.where(retie, first, second)
            first = np.where(retie, first_tied, first)
        yield s, first.astype(np.int64), second.astype(np.int64)


def nearest_seed(queries: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Exact nearest seed of each query row by direct scan (the slow,
    certain route; assign_cells is the indexed one)."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    out = np.empty(queries.shape[0], dtype=np.int64)
    for s, first, _ in _nearest_two_chunked(queries, seeds):
        out[s:s + first.shape[0]] = first
    return out


def build_adjacency(points: PointSet, seeds: np.ndarray, assignment: np.ndarray,
                    probe_budget: int | None = None, seed: int = 0,
                    box: BoundingBox | None = None):
    """Witness-probe approximation of the cell neighbour graph.

    Every data point and `probe_budget` extra uniform draws over `box`
    vote with their (nearest, second nearest) seed pair; each distinct
    pair becomes an edge.  Returns (indptr, indices) in CSR layout,
    symmetric with ascending neighbour lists.

    Edges whose shared face is tiny may be missed; spurious edges cannot
    occur because every witness pair genuinely touches a shared boundary.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    n_seed = seeds.shape[0]
    if probe_budget is None:
        probe_budget = max(100_000, 10 * n_seed)
    if box is None:
        box = bounding_box(points)
    rng = np.random.default_rng(seed)
    extra = rng.uniform(box.lo, box.hi, size=(probe_budget, seeds.shape[1]))
    probes = np.vstack([points.coords, extra])

    pairs = set()
    if n_seed > 1:
        for _, first, second in _nearest_two_chunked(probes, seeds):
            lo = np.minimum(first, second)
            hi = np.maximum(first, second)
            pairs.update(np.unique(lo * n_seed + hi).tolist())
    if pairs:
        codes = np.array(sorted(pairs), dtype=np.int64)
        a, b = codes // n_seed, codes % n_seed
        src = np.concatenate([a, b])
        dst = np.concatenate([b, a])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.searchsorted(src, np.arange(n_seed + 1)).astype(np.int64)
        return indptr, dst.astype(np.int64)
    return np.zeros(n_seed + 1, dtype=np.int64), np.empty(0, dtype=np.int64)


def estimate_volumes(seeds: np.ndarray, box: BoundingBox, n_samples: int,
                     seed: int = 0):
    """Monte Carlo cell volumes over `box`.

    Draws n_samples uniform points, assigns each to its exact nearest
    seed, and scales counts by the box volume.  Requires at least ten
    samples per seed.  Returns (volumes, standard_errors, counts);
    counts always sum to exactly n_samples.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    n_seed = seeds.shape[0]
    if n_samples < 10 * n_seed:
        raise ValueError(f"need n_samples >= {10 * n_seed} for {n_seed} seeds")
    rng = np.random.default_rng(seed)
    counts = np.zeros(n_seed, dtype=np.int64)
    draws = rng.uniform(box.lo, box.hi, size=(n_samples, seeds.shape[1]))
    for s, first, _ in _nearest_two_chunked(draws, seeds):
        counts += np.bincount(first, minlength=n_seed)
    frac = counts / n_samples
    volumes = box.volume * frac
    se = box.volume * np.sqrt(frac * (1.0 - frac) / n_samples)
    return volumes, se, counts


def order_cells(seeds: np.ndarray) -> np.ndarray:
    """Permutation of cell ids along an interleaved-bit space curve.

    Coordinates (the three leading principal directions when dim > 3)
    are quantised to 21 bits per axis and interleaved, x least
    significant; ties resolve by cell id.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    n_seed, dim = seeds.shape
    if n_seed == 1:
        return np.zeros(1, dtype=np.int64)
    if dim > 3:
        transform = fit_pca(PointSet(seeds), 3)
        coords = apply_transform(transform, PointSet(seeds)).coords
    else:
        coords = seeds
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    span[span == 0.0] = 1.0
    scale = float(2 ** _MORTON_BITS - 1)
    q = np.clip((coords - lo) / span * scale, 0.0, scale).astype(np.uint64)
    d = coords.shape[1]
    code = np.zeros(n_seed, dtype=np.uint64)
    one = np.uint64(1)
    for bit in range(_MORTON_BITS):
        for axis in range(d):
            code |= ((q[:, axis] >> np.uint64(bit)) & one) << np.uint64(bit * d + axis)
    return np.lexsort((np.arange(n_seed), code)).astype(np.int64)


def build_voronoi(points: PointSet, n_seed: int, seed: int = 0,
                  probe_budget: int | None = None,
                  volume_samples: int | None = None,
                  box: BoundingBox | None = None) -> VoronoiIndex:
    """Sample seeds from the data and assemble the full cell map.

    Parameters
    ----------
    points : PointSet
    n_seed : int
        Number of cells.
    seed : int
        One seed drives seed picking, probing, and volume sampling
        (each with its own derived stream), so builds are reproducible.
    probe_budget : int, optional
        Extra uniform witness probes for adjacency (default
        max(100000, 10 * n_seed), on top of the data points).
    volume_samples : int, optional
        Monte Carlo draws for volumes (default max(100 * n_seed, 10000)).
    box : BoundingBox, optional
        Sampling box for probes and volumes; defaults to the data box.
    """
    if box is None:
        box = bounding_box(points)
    if volume_samples is None:
        volume_samples = max(100 * n_seed, 10_000)
    seed_ids = pick_seeds(points, n_seed, seed=seed)
    seeds = np.ascontiguousarray(points.coords[seed_ids])
    assignment = assign_cells(points, seeds)
    indptr, indices = build_adjacency(points, seeds, assignment,
                                      probe_budget=probe_budget,
                                      seed=seed + 1, box=box)
    volumes, se, counts = estimate_volumes(seeds, box, volume_samples, seed=seed + 2)
    return VoronoiIndex(seeds, seed_ids, assignment, indptr, indices,
                        volumes, se, counts, volume_samples, box, order_cells(seeds))


# ---------------------------------------------------------------------------
# queries


def locate_cell(index: VoronoiIndex, query) -> LocateResult:
    """Cell containing `query`: greedy walk plus exact verification.

    The walk starts at the first cell of the space curve and repeatedly
    moves to the adjacent cell whose seed is closest to the query (ties
    to the smaller id), stopping at a local minimum.  The stop cell is
    checked against the exact nearest seed; the exact cell is always
    returned, and a disagreement is reported as a walk miss.
    """
    p = np.ascontiguousarray(query, dtype=np.float64)
    if p.shape != (index.dim,):
        raise ValueError(f"query must have shape ({index.dim},)")
    if not np.isfinite(p).all():
        raise ValueError("query must be finite")
    seeds = index.seeds
    current = int(index.cell_order[0])
    delta = seeds[current] - p
    best = float(delta @ delta)
    steps = 0
    while True:
        nbrs = index.neighbors(current)
        if nbrs.shape[0] == 0:
            break
        diff = seeds[nbrs] - p
        d2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(d2))  # first minimum: smallest tied neighbour id
        if d2[i] < best:
            current = int(nbrs[i])
            best = float(d2[i])
            steps += 1
        else:
            break
    exact = int(nearest_seed(p[None, :], seeds)[0])
    return LocateResult(cell=exact, walk_cell=current, steps=steps,
                        walk_missed=current != exact)


def voronoi_query_polytope(index: VoronoiIndex, points: PointSet, poly: Polytope,
                           sample_per_cell: int = 8):
    """Ids of all points inside `poly`, exact, routed through the cells.

    Cells whose member box is fully inside contribute every member
    without per-point work; fully outside cells are skipped; members of
    boundary cells are tested individually (a first pass over up to
    `sample_per_cell` members per cell feeds the selectivity estimate in
    the stats, then the rest are tested).
    """
    if poly.dim != index.dim:
        raise ValueError("polytope and index dimensions differ")
    if points.n != index.n_points:
        raise ValueError("point set does not match the index")
    counts = index.cell_counts()
    occupied = np.flatnonzero(counts > 0)
    # empty cells occupy zero-width CSR spans, so reduceat over the
    # occupied starts reduces exactly one cell's members per segment
    gathered = points.coords[index.members_ids]
    starts = index.members_indptr[occupied]
    lo = np.minimum.reduceat(gathered, starts, axis=0)
    hi = np.maximum.reduceat(gathered, starts, axis=0)
    code = _classify_boxes(lo, hi, poly)

    chunks = []
    for cell in occupied[code == 2]:
        chunks.append(index.members(int(cell)))
    sampled = sample_hits = tested = 0
    partial = occupied[code == 1]
    if partial.shape[0]:
        head, tail = [], []
        for cell in partial:
            members = index.members(int(cell))
            head.append(members[:sample_per_cell])
            tail.append(members[sample_per_cell:])
        for group, is_sample in ((head, True), (tail, False)):
            cand = np.concatenate(group)
            if cand.shape[0] == 0:
                continue
            inside = poly.contains(points.coords[cand])
            tested += cand.shape[0]
            if is_sample:
                sampled = cand.shape[0]
                sample_hits = int(inside.sum())
            chunks.append(cand[inside])
    ids = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    stats = VoronoiQueryStats(
        returned=ids.shape[0], tested=tested,
        cells_inside=int((code == 2).sum()),
        cells_outside=int((code == 0).sum()),
        cells_partial=int((code == 1).sum()),
        sampled=sampled, sample_hits=sample_hits)
    return ids, stats


# ---------------------------------------------------------------------------
# persistence

# Layout: magic | u16 version | u16 pad | u64 S | u64 N | u32 dim |
#         u64 volume_samples | u64 adjacency nnz |
#         box lo f64*dim | box hi f64*dim | seeds f64 S*dim (row major) |
#         seed_ids i64*S | assignment i64*N | adj_indptr i64*(S+1) |
#         adj_indices i64*nnz | volumes f64*S | volume_se f64*S |
#         volume_counts i64*S | cell_order i64*S
_VOR_HEADER = struct.Struct("<4sHHQQIQQ")


def save_voronoi(index: VoronoiIndex, path: str) -> None:
    """Write the index to `path`; member lists are rebuilt on load."""
    with open(path, "wb") as fh:
        fh.write(_VOR_HEADER.pack(
            VORONOI_MAGIC, VORONOI_VERSION, 0, index.n_cells, index.n_points,
            index.dim, index.volume_samples, index.adj_indices.shape[0]))
        fh.write(index.box.lo.tobytes())
        fh.write(index.box.hi.tobytes())
        fh.write(np.ascontiguousarray(index.seeds).tobytes())
        for arr in (index.seed_ids, index.assignment, index.adj_indptr,
                    index.adj_indices, index.volumes, index.volume_se,
                    index.volume_counts, index.cell_order):
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_voronoi(path: str) -> VoronoiIndex:
    """Read an index written by :func:`save_voronoi`."""
    with open(path, "rb") as fh:
        header = fh.read(_VOR_HEADER.size)
        if len(header) != _VOR_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, _, n_seed, n_points, dim, vol_samples, nnz = \
            _VOR_HEADER.unpack(header)
        if magic != VORONOI_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {VORONOI_MAGIC!r}")
        if version != VORONOI_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")

        def block(dtype, count, what):
            width = np.dtype(dtype).itemsize
            buf = fh.read(width * count)
            if len(buf) != width * count:
                raise FormatError(f"{path}: truncated while reading {what}")
            return np.frombuffer(buf, dtype=dtype).copy()

        lo = block("<f8", dim, "box lower bound")
        hi = block("<f8", dim, "box upper bound")
        seeds = block("<f8", n_seed * dim, "seeds").reshape(n_seed, dim)
        seed_ids = block("<i8", n_seed, "seed ids")
        assignment = block("<i8", n_points, "assignment")
        indptr = block("<i8", n_seed + 1, "adjacency offsets")
        indices = block("<i8", nnz, "adjacency lists")
        volumes = block("<f8", n_seed, "volumes")
        volume_se = block("<f8", n_seed, "volume errors")
        volume_counts = block("<i8", n_seed, "volume counts")
        cell_order = block("<i8", n_seed, "cell order")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after declared arrays")
    return VoronoiIndex(seeds, seed_ids, assignment, indptr, indices,
                        volumes, volume_se, volume_counts, vol_samples,
                        BoundingBox(lo, hi), cell_order)
