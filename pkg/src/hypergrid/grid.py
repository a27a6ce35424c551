"""Layered uniform grid for progressive, density-faithful sampling.

Every point gets a random id (a seeded permutation of 0..N-1), a layer,
and a cell id.  Layer 1 holds the `base` smallest random ids, and each
following layer holds eight times as many as the one before, so layer l
has capacity base * 8**(l-1).  Layer l is bucketed on a uniform grid of
2**l cells per axis over three chosen coordinates, i.e. one octree
refinement per layer: each deeper layer has eight times the cells and
eight times the points, keeping expected points per cell constant.

Because membership in the first k layers is a uniform random subset of
fixed size, reading layers 1..k yields a sample that follows the data
distribution at every stopping point, and the grid cells let a box query
read only the points whose cells touch the box.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset import BoundingBox, PointSet, bounding_box_of
from .errors import FormatError

GRID_MAGIC = b"HGLG"
GRID_VERSION = 1

DEFAULT_BASE = 1024


@dataclass(frozen=True)
class GridLayer:
    """Bookkeeping for one layer: its id range and grid resolution."""

    index: int          # 1-based
    resolution: int     # cells per axis, 2**index
    id_lo: int          # smallest random id on this layer
    id_hi: int          # one past the largest (capacity bound, not N-clipped)
    start: int          # slice bounds into the grid's layer-major order
    stop: int

    @property
    def capacity(self) -> int:
        return self.id_hi - self.id_lo

    @property
    def count(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class SampleStats:
    """Work accounting for one sample_box call."""

    examined: int       # points gathered from touched cells before the box filter
    returned: int
    layers_read: int


class LayeredGrid:
    """Immutable layered-grid index over three coordinates of a PointSet.

    Attributes
    ----------
    random_id, layer, contained_by : ndarray
        The three per-point columns: permutation id, 1-based layer, and
        cell id on that layer's grid (x fastest, then y, then z).
    layers : list of GridLayer
    box : BoundingBox
        Padded half-open box over the three indexed coordinates.
    coord_indices : tuple of 3 ints
        Which columns of the dataset the grid indexes.
    """

    def __init__(self, coord_indices, base, box, random_id, layer, contained_by):
        self.coord_indices = tuple(int(c) for c in coord_indices)
        self.base = int(base)
        self.box = box
        self.random_id = random_id
        self.layer = layer
        self.contained_by = contained_by
        self.n = random_id.shape[0]
        for arr in (random_id, layer, contained_by):
            arr.flags.writeable = False
        # layer-major order: (layer, cell, random_id); queries walk slices of it
        self._order = np.lexsort((random_id, contained_by, layer))
        ordered_layers = layer[self._order]
        n_layers = int(layer.max())
        starts = np.searchsorted(ordered_layers, np.arange(1, n_layers + 2))
        self.layers = []
        for idx in range(1, n_layers + 1):
            self.layers.append(GridLayer(
                index=idx,
                resolution=2 ** idx,
                id_lo=_layer_capacity_below(self.base, idx),
                id_hi=_layer_capacity_below(self.base, idx + 1),
                start=int(starts[idx - 1]),
                stop=int(starts[idx]),
            ))
        # per-layer cell ids in sorted order, for searchsorted lookups
        self._cells_by_layer = [
            contained_by[self._order[l.start:l.stop]] for l in self.layers
        ]

    # -- construction ------------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def point_ids_in_layer_order(self) -> np.ndarray:
        """Point ids sorted by (layer, cell, random id); a stable full scan."""
        return self._order


def _layer_capacity_below(base: int, layer: int) -> int:
    # total capacity of layers 1..layer-1: base * (8**(layer-1) - 1) / 7
    return base * (8 ** (layer - 1) - 1) // 7


def layer_count(n: int, base: int) -> int:
    """Smallest L such that layers 1..L can hold n points."""
    total, layers = 0, 0
    while total < n:
        layers += 1
        total += base * 8 ** (layers - 1)
    return layers


def build_grid(points: PointSet, coord_indices=(0, 1, 2), base: int = DEFAULT_BASE,
               seed: int = 0) -> LayeredGrid:
    """Assign every point a random id, a layer, and a grid cell.

    Parameters
    ----------
    points : PointSet
        Must have at least one point and cover the three chosen columns.
    coord_indices : sequence of 3 distinct ints
        Dataset columns to index; the grid is always three-dimensional.
    base : int
        Capacity of layer 1; later layers grow by a factor of eight.
    seed : int
        Seed for the id permutation.  Fixed seed, fixed structure.

    Returns
    -------
    LayeredGrid
    """
    ci = tuple(int(c) for c in coord_indices)
    if len(ci) != 3 or len(set(ci)) != 3:
        raise ValueError("coord_indices must name three distinct columns")
    if any(c < 0 or c >= points.dim for c in ci):
        raise ValueError(f"coord_indices {ci} out of range for dim {points.dim}")
    if base < 1:
        raise ValueError("base must be >= 1")
    if points.n < 1:
        raise ValueError("cannot index an empty point set")

    n = points.n
    sub = np.ascontiguousarray(points.coords[:, ci])
    box = bounding_box_of(sub)

    rng = np.random.default_rng(seed)
    random_id = rng.permutation(n).astype(np.int64)

    n_layers = layer_count(n, base)
    # ascending capacity boundaries [base, 9*base, 73*base, ...]
    bounds = np.array([_layer_capacity_below(base, l + 1) for l in range(1, n_layers + 1)],
                      dtype=np.int64)
    layer = (np.searchsorted(bounds, random_id, side="right") + 1).astype(np.int32)

    contained_by = np.empty(n, dtype=np.int64)
    for l in range(1, n_layers + 1):
        mask = layer == l
        contained_by[mask] = _cell_ids(sub[mask], box, 2 ** l)
    return LayeredGrid(ci, base, box, random_id, layer, contained_by)


def _cell_ids(sub: np.ndarray, box: BoundingBox, resolution: int) -> np.ndarray:
    """Cell id of each row of `sub` on a resolution^3 grid over `box`."""
    width = box.extent / resolution
    idx = np.floor((sub - box.lo) / width).astype(np.int64)
    np.clip(idx, 0, resolution - 1, out=idx)
    return idx[:, 0] + resolution * (idx[:, 1] + resolution * idx[:, 2])


# ---------------------------------------------------------------------------
# queries


def cells_intersecting(grid: LayeredGrid, layer: int, box: BoundingBox) -> np.ndarray:
    """Ids of all cells on `layer` whose half-open extent meets `box`.

    Computed from per-axis index ranges (never by scanning the cell
    population), so the cost is the size of the answer.
    """
    if not 1 <= layer <= grid.n_layers:
        raise ValueError(f"layer must be in [1, {grid.n_layers}]")
    if box.dim != 3:
        raise ValueError("query box must be 3-dimensional")
    res = grid.layers[layer - 1].resolution
    width = grid.box.extent / res
    ranges = []
    for a in range(3):
        edges = grid.box.lo[a] + width[a] * np.arange(res + 1)
        i_min = int(np.searchsorted(edges, box.lo[a], side="right")) - 1
        i_max = int(np.searchsorted(edges, box.hi[a], side="left")) - 1
        i_min = max(i_min, 0)
        i_max = min(i_max, res - 1)
        if i_max < i_min:
            return np.empty(0, dtype=np.int64)
        ranges.append(np.arange(i_min, i_max + 1, dtype=np.int64))
    ix, iy, iz = np.meshgrid(*ranges, indexing="ij")
    cells = ix + res * (iy + res * iz)
    return np.sort(cells.ravel())


def _ranges_to_positions(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenate arange(start, stop) for each pair, without a Python loop."""
    counts = stops - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    # offset of each range's first element within the output
    first = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=first[1:])
    out = np.arange(total, dtype=np.int64)
    out += np.repeat(starts - first, counts)
    return out


def sample_box(grid: LayeredGrid, points: PointSet, box: BoundingBox, n: int,
               with_stats: bool = False):
    """At least `n` sample points inside `box`, faithful to local density.

    Reads whole layers in order, keeping only points whose cells touch
    the box and that pass the half-open box test, and stops after the
    first layer that pushes the running total to `n` or beyond (every
    point of that layer inside the box is returned, so results for
    growing `n` are nested).  Returns fewer than `n` only when the box
    holds fewer than `n` points in total.

    Returns
    -------
    ids : ndarray of int64
        Point ids ordered by (layer, cell, random id).
    stats : SampleStats, only when with_stats is True.
    """
    if box.dim != 3:
        raise ValueError("query box must be 3-dimensional")
    if (box.extent <= 0).any():
        raise ValueError("query box is empty on some axis")
    if n < 1:
        raise ValueError("n must be >= 1")
    sub = points.coords[:, grid.coord_indices]
    picked = []
    examined = 0
    returned = 0
    layers_read = 0
    for gl in grid.layers:
        layers_read += 1
        cells = cells_intersecting(grid, gl.index, box)
        layer_cells = grid._cells_by_layer[gl.index - 1]
        starts = np.searchsorted(layer_cells, cells, side="left") + gl.start
        stops = np.searchsorted(layer_cells, cells, side="right") + gl.start
        pos = _ranges_to_positions(starts, stops)
        ids = grid._order[pos]
        examined += ids.shape[0]
        if ids.shape[0]:
            pts = sub[ids]
            inside = ((pts >= box.lo) & (pts < box.hi)).all(axis=1)
            ids = ids[inside]
        picked.append(ids)
        returned += ids.shape[0]
        if returned >= n:
            break
    result = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
    if with_stats:
        return result, SampleStats(examined=examined, returned=returned,
                                   layers_read=layers_read)
    return result


# ---------------------------------------------------------------------------
# persistence

# Layout: magic | u16 version | u16 pad | u64 n | u32 base | u32 n_layers |
#         3 x u32 coord_indices | 3 x f64 box.lo | 3 x f64 box.hi |
#         random_id int64 column | layer int32 column | contained_by int64 column
_GRID_HEADER = struct.Struct("<4sHHQII3I3d3d")


def save_grid(grid: LayeredGrid, path: str) -> None:
    """Write the grid's per-point columns and metadata to `path`."""
    with open(path, "wb") as fh:
        fh.write(_GRID_HEADER.pack(
            GRID_MAGIC, GRID_VERSION, 0, grid.n, grid.base, grid.n_layers,
            *grid.coord_indices, *grid.box.lo, *grid.box.hi))
        fh.write(grid.random_id.tobytes())
        fh.write(grid.layer.tobytes())
        fh.write(grid.contained_by.tobytes())


def load_grid(path: str) -> LayeredGrid:
    """Read a grid written by :func:`save_grid`."""
    with open(path, "rb") as fh:
        header = fh.read(_GRID_HEADER.size)
        if len(header) != _GRID_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        fields = _GRID_HEADER.unpack(header)
        magic, version = fields[0], fields[1]
        if magic != GRID_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
        if version != GRID_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        n, base = fields[3], fields[4]
        ci = fields[6:9]
        lo, hi = np.array(fields[9:12]), np.array(fields[12:15])

        def column(dtype, width, what):
            buf = fh.read(width * n)
            if len(buf) != width * n:
                raise FormatError(f"{path}: truncated while reading {what}")
            return np.frombuffer(buf, dtype=dtype).copy()

        random_id = column("<i8", 8, "random ids")
        layer = column("<i4", 4, "layers")
        contained_by = column("<i8", 8, "cell ids")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after declared columns")
    return LayeredGrid(ci, base, BoundingBox(lo, hi), random_id, layer, contained_by)
