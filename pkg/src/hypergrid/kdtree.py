"""Balanced kd-tree over a static point set, and polytope queries on it.

The tree is a complete binary tree stored in heap layout (children of
node i are 2i+1 and 2i+2), so its shape is fixed by the point count
alone: the number of leaves is the power of two nearest to sqrt(N),
which makes leaf populations about sqrt(N) as well.  Each internal node
splits its points on the widest axis of their tight bounding box at the
lower median (ties broken by point id), sending the median left, so any
two leaf populations differ by at most one.

Every node stores the tight box of its own points.  Tight boxes shrink
away from sparse space, which is what lets a halfspace query classify
whole subtrees as fully inside or fully outside and touch only the
boundary leaves.

Nodes are numbered post-order.  A node's post-order id is larger than
every id in its subtree and its descendants occupy one contiguous id
interval, so "all boxes under this node" is a single range fetch; the
leaves below a node are likewise one contiguous run of leaf ordinals.
"""

from __future__ import annotations

import struct
import time
import weakref
from dataclasses import dataclass

import numpy as np

from .dataset import BoundingBox, PointSet
from .errors import FormatError, HypergridError

KDTREE_MAGIC = b"HGKD"
KDTREE_VERSION = 1

_OUTSIDE, _PARTIAL, _INSIDE = 0, 1, 2


def leaf_count_for(n: int) -> int:
    """Number of leaves: the power of two nearest to sqrt(n) (half up),
    clipped so no leaf can be empty."""
    if n < 2:
        raise ValueError("a tree needs at least two points")
    depth = int(np.floor(0.5 * np.log2(n) + 0.5))
    depth = max(1, min(depth, int(np.log2(n))))
    return 2 ** depth


class KdTree:
    """Balanced kd-tree in heap layout.  Build with :func:`build_kdtree`.

    Attributes
    ----------
    depth : int
        Leaf level; the root is level 0 and there are 2**depth leaves.
    split_dim, split_value : ndarray
        Per-node split axis (-1 for leaves) and split coordinate; points
        with coordinate <= split_value go left.
    box_lo, box_hi : ndarray, shape (n_nodes, dim)
        Tight per-node bounding boxes.
    perm : ndarray of int64
        Point ids ordered so each leaf (and by extension each node) owns
        one contiguous slice.
    leaf_offsets : ndarray of int64, shape (n_leaves + 1,)
        Slice boundaries of consecutive leaves within `perm`.
    post_order_id : ndarray of int64
        Heap index -> post-order id (the stable public node id).
    first_leaf, last_leaf : ndarray of int64
        Inclusive range of leaf ordinals below each node.
    """

    def __init__(self, n, dim, depth, split_dim, split_value, box_lo, box_hi,
                 perm, leaf_offsets):
        self.n = int(n)
        self.dim = int(dim)
        self.depth = int(depth)
        self.n_leaves = 2 ** self.depth
        self.n_nodes = 2 ** (self.depth + 1) - 1
        self.split_dim = split_dim
        self.split_value = split_value
        self.box_lo = box_lo
        self.box_hi = box_hi
        self.perm = perm
        self.leaf_offsets = leaf_offsets
        for arr in (split_dim, split_value, box_lo, box_hi, perm, leaf_offsets):
            arr.flags.writeable = False

        nodes = np.arange(self.n_nodes)
        self._level = np.floor(np.log2(nodes + 1)).astype(np.int64)
        pos = nodes + 1 - 2 ** self._level            # position within level
        span = 2 ** (self.depth - self._level)        # leaves per node
        self.first_leaf = pos * span
        self.last_leaf = (pos + 1) * span - 1
        self.counts = (leaf_offsets[self.last_leaf + 1] - leaf_offsets[self.first_leaf])
        self.post_order_id = _post_order_ids(self.depth)

    # -- node helpers ------------------------------------------------------

    def is_leaf(self, node: int) -> bool:
        return node >= self.n_leaves - 1

    def node_box(self, node: int) -> BoundingBox:
        return BoundingBox(self.box_lo[node], self.box_hi[node])

    def node_level(self, node: int) -> int:
        return int(self._level[node])

    def node_point_ids(self, node: int) -> np.ndarray:
        """Ids of the points below `node` (one contiguous perm slice)."""
        s = self.leaf_offsets[self.first_leaf[node]]
        e = self.leaf_offsets[self.last_leaf[node] + 1]
        return self.perm[s:e]

    def leaf_slice(self, leaf: int) -> tuple[int, int]:
        return int(self.leaf_offsets[leaf]), int(self.leaf_offsets[leaf + 1])

    def post_order_interval(self, node: int) -> tuple[int, int]:
        """Inclusive post-order id range covering `node` and its subtree."""
        size = 2 ** (self.depth - self._level[node] + 1) - 1
        own = int(self.post_order_id[node])
        return own - size + 1, own


def _post_order_ids(depth: int) -> np.ndarray:
    n_nodes = 2 ** (depth + 1) - 1
    first_leaf_node = 2 ** depth - 1
    post = np.empty(n_nodes, dtype=np.int64)
    counter = 0
    stack = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded or node >= first_leaf_node:
            post[node] = counter
            counter += 1
        else:
            stack.append((node, True))
            stack.append((2 * node + 2, False))
            stack.append((2 * node + 1, False))
    return post


def build_kdtree(points: PointSet) -> KdTree:
    """Build the balanced tree; identical input gives an identical tree.

    Level by level, each node's points are sorted by (coordinate on the
    widest axis of their tight box, point id) and cut at the lower
    median, which goes to the left child.
    """
    n, d = points.n, points.dim
    n_leaves = leaf_count_for(n)
    depth = int(np.log2(n_leaves))
    n_nodes = 2 * n_leaves - 1
    coords = points.coords

    perm = np.arange(n, dtype=np.int64)
    split_dim = np.full(n_nodes, -1, dtype=np.int32)
    split_value = np.full(n_nodes, np.nan)
    box_lo = np.empty((n_nodes, d))
    box_hi = np.empty((n_nodes, d))

    offsets = np.array([0, n], dtype=np.int64)
    for level in range(depth + 1):
        base = 2 ** level - 1
        next_offsets = (np.empty(2 ** (level + 1) + 1, dtype=np.int64)
                        if level < depth else offsets)
        for j in range(2 ** level):
            node = base + j
            s, e = int(offsets[j]), int(offsets[j + 1])
            ids = perm[s:e]
            pts = coords[ids]
            box_lo[node] = pts.min(axis=0)
            box_hi[node] = pts.max(axis=0)
            if level < depth:
                sd = int(np.argmax(box_hi[node] - box_lo[node]))
                order = np.lexsort((ids, pts[:, sd]))
                ids_sorted = ids[order]
                perm[s:e] = ids_sorted
                left = (e - s + 1) // 2
                split_dim[node] = sd
                split_value[node] = coords[ids_sorted[left - 1], sd]
                next_offsets[2 * j] = s
                next_offsets[2 * j + 1] = s + left
                next_offsets[2 * j + 2] = e
        offsets = next_offsets

    return KdTree(n, d, depth, split_dim, split_value, box_lo, box_hi,
                  perm, offsets)


# ---------------------------------------------------------------------------
# polytopes


@dataclass(frozen=True)
class Polytope:
    """Convex region as an intersection of halfspaces: normals @ x <= offsets."""

    normals: np.ndarray   # (H, D)
    offsets: np.ndarray   # (H,)

    def __post_init__(self):
        normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        offsets = np.ascontiguousarray(self.offsets, dtype=np.float64)
        if normals.ndim != 2 or offsets.shape != (normals.shape[0],):
            raise ValueError("normals must be (H, D) and offsets (H,)")
        if normals.shape[0] < 1:
            raise ValueError("a polytope needs at least one halfspace")
        if not (np.isfinite(normals).all() and np.isfinite(offsets).all()):
            raise ValueError("halfspaces must be finite")
        if (np.abs(normals).max(axis=1) == 0).any():
            raise ValueError("zero normal vector")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        normals.flags.writeable = False
        offsets.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains(self, coords: np.ndarray) -> np.ndarray:
        """Membership mask for an (M, D) array of points."""
        pts = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        return (pts @ self.normals.T <= self.offsets).all(axis=1)

    @staticmethod
    def from_box(box: BoundingBox) -> "Polytope":
        """The 2D axis-aligned halfspaces of a (closed) box."""
        d = box.dim
        eye = np.eye(d)
        return Polytope(np.vstack([eye, -eye]), np.concatenate([box.hi, -box.lo]))


def _classify_boxes(lo: np.ndarray, hi: np.ndarray, poly: Polytope) -> np.ndarray:
    """Classify each (lo, hi) box: 0 outside, 1 partial, 2 fully inside.

    Per halfspace, the box's extreme values of normals @ x sit at support
    corners, so only two matrix products are needed for any batch.
    """
    pos = np.maximum(poly.normals, 0.0)
    neg = np.minimum(poly.normals, 0.0)
    min_vals = lo @ pos.T + hi @ neg.T
    max_vals = hi @ pos.T + lo @ neg.T
    out = np.full(lo.shape[0], _PARTIAL, dtype=np.int8)
    out[(min_vals > poly.offsets).any(axis=1)] = _OUTSIDE
    out[(max_vals <= poly.offsets).all(axis=1)] = _INSIDE
    return out


def classify_box(box: BoundingBox, poly: Polytope) -> str:
    """'inside', 'outside', or 'partial' for one box against a polytope."""
    if box.dim != poly.dim:
        raise ValueError("box and polytope dimensions differ")
    code = _classify_boxes(box.lo[None, :], box.hi[None, :], poly)[0]
    return ("outside", "partial", "inside")[code]


@dataclass(frozen=True)
class PolytopeStats:
    """Work accounting for one polytope query."""

    returned: int
    tested: int            # points individually checked against the halfspaces
    leaves_scanned: int    # leaves whose points were tested
    inside_nodes: int      # subtrees accepted wholesale
    nodes_classified: int


_SUB_LEVELS = 3  # each leaf refines into up to 2**_SUB_LEVELS scan blocks


class _ScanAux:
    """Leaf-refined coordinate copy, cached on the tree per point set.

    Each leaf slice is median-split a further `_SUB_LEVELS` levels
    (widest axis first) inside a private copy, so a boundary leaf can be
    pruned block by block and only points of boundary blocks need
    individual tests, read sequentially instead of gathered.
    """

    __slots__ = ("points_ref", "coords", "ids", "block_offsets",
                 "block_lo", "block_hi", "blocks_per_leaf")

    def __init__(self, tree: KdTree, points: PointSet):
        self.points_ref = weakref.ref(points)
        coords = points.coords[tree.perm]
        ids = tree.perm.copy()
        bpl = 2 ** _SUB_LEVELS
        self.blocks_per_leaf = bpl
        cuts = np.empty((tree.n_leaves, bpl), dtype=np.int64)
        for leaf in range(tree.n_leaves):
            bounds = [(int(tree.leaf_offsets[leaf]),
                       int(tree.leaf_offsets[leaf + 1]))]
            for _ in range(_SUB_LEVELS):
                nxt = []
                for a, b in bounds:
                    m = (b - a) // 2
                    if m > 0:
                        seg = coords[a:b]
                        axis = int(np.argmax(seg.max(axis=0) - seg.min(axis=0)))
                        part = np.argpartition(seg[:, axis], m)
                        coords[a:b] = seg[part]
                        ids[a:b] = ids[a:b][part]
                    nxt.append((a, a + m))
                    nxt.append((a + m, b))
                bounds = nxt
            cuts[leaf] = [a for a, _ in bounds]
        self.coords = np.ascontiguousarray(coords)
        self.ids = ids
        self.block_offsets = np.append(cuts.ravel(), tree.leaf_offsets[-1])
        starts = self.block_offsets[:-1]
        stops = self.block_offsets[1:]
        nonempty = stops > starts
        lo = np.zeros((starts.shape[0], points.dim))
        hi = np.zeros_like(lo)
        if nonempty.any():
            # zero-width segments between selected starts contribute nothing
            lo[nonempty] = np.minimum.reduceat(coords, starts[nonempty], axis=0)
            hi[nonempty] = np.maximum.reduceat(coords, starts[nonempty], axis=0)
        self.block_lo = lo
        self.block_hi = hi


def _scan_aux_for(tree: KdTree, points: PointSet) -> _ScanAux:
    aux = getattr(tree, "_scan_aux", None)
    if aux is None or aux.points_ref() is not points:
        aux = _ScanAux(tree, points)
        tree._scan_aux = aux
    return aux


def _fused_runs(starts, stops):
    """Maximal contiguous (start, stop) runs of back-to-back slices."""
    if starts.shape[0] == 0:
        return [], []
    breaks = np.flatnonzero(starts[1:] != stops[:-1])
    run_starts = starts[np.concatenate(([0], breaks + 1))]
    run_stops = stops[np.concatenate((breaks, [stops.shape[0] - 1]))]
    return run_starts.tolist(), run_stops.tolist()


def query_polytope(tree: KdTree, points: PointSet, poly: Polytope,
                   with_stats: bool = False):
    """Ids of all points inside `poly`, exactly.

    Classifies every node box in two batched products, then prunes top
    down: subtrees fully inside contribute every point without any
    per-point test, subtrees fully outside are dropped, and only points
    of boundary leaves are tested individually.  The first query on a
    (tree, points) pair caches a leaf-refined coordinate copy on the
    tree, letting boundary leaves be pruned block by block with the
    surviving candidates read sequentially.
    """
    if poly.dim != tree.dim:
        raise ValueError("polytope and tree dimensions differ")
    aux = _scan_aux_for(tree, points)
    pos = np.maximum(poly.normals, 0.0).T
    neg = np.minimum(poly.normals, 0.0).T
    offsets = poly.offsets
    first_leaf_node = tree.n_leaves - 1

    # classify every node in two batched products, then walk the levels:
    # a node is examined only while all its ancestors classify partial
    node_out = ((tree.box_lo @ pos + tree.box_hi @ neg) > offsets).any(axis=1)
    node_in = ((tree.box_hi @ pos + tree.box_lo @ neg) <= offsets).all(axis=1)
    node_partial = ~(node_out | node_in)
    visited = np.empty(tree.n_nodes, dtype=bool)
    visited[0] = True
    for level in range(tree.depth):
        pa, pb = 2 ** level - 1, 2 ** (level + 1) - 1
        expand = visited[pa:pb] & node_partial[pa:pb]
        visited[2 * pa + 1:2 * pb + 1].reshape(-1, 2)[:] = expand[:, None]
    nodes_classified = int(np.count_nonzero(visited))

    chunks = []
    accepted = np.flatnonzero(node_in & visited)
    if accepted.size:
        # perm spans of whole subtrees, via closed-form heap descendants
        hops = tree.depth - np.floor(np.log2(accepted + 1)).astype(np.int64)
        width = np.int64(1) << hops
        leaf_lo = (accepted + 1) * width - 1 - first_leaf_node
        starts = tree.leaf_offsets[leaf_lo]
        stops = tree.leaf_offsets[leaf_lo + width]
        order = np.argsort(starts)
        for a, b in zip(*_fused_runs(starts[order], stops[order])):
            chunks.append(tree.perm[a:b])
    tested = 0
    leaves_scanned = 0
    partial_leaves = np.flatnonzero(node_partial[first_leaf_node:]
                                    & visited[first_leaf_node:])
    if partial_leaves.size:
        leaves_scanned = partial_leaves.shape[0]
        bpl = aux.blocks_per_leaf
        leaf_idx = partial_leaves
        blocks = (leaf_idx[:, None] * bpl + np.arange(bpl)).ravel()
        bstarts = aux.block_offsets[blocks]
        bstops = aux.block_offsets[blocks + 1]
        filled = bstops > bstarts
        blocks, bstarts, bstops = blocks[filled], bstarts[filled], bstops[filled]
        blo = aux.block_lo[blocks]
        bhi = aux.block_hi[blocks]
        b_out = ((blo @ pos + bhi @ neg) > offsets).any(axis=1)
        b_in = ((bhi @ pos + blo @ neg) <= offsets).all(axis=1)
        for a, b in zip(*_fused_runs(bstarts[b_in], bstops[b_in])):
            chunks.append(aux.ids[a:b])
        part = ~(b_in | b_out)
        if part.any():
            run_starts, run_stops = _fused_runs(bstarts[part], bstops[part])
            if len(run_starts) == 1:
                view = aux.coords[run_starts[0]:run_stops[0]]
                cand = aux.ids[run_starts[0]:run_stops[0]]
            else:
                view = np.concatenate(
                    [aux.coords[a:b] for a, b in zip(run_starts, run_stops)])
                cand = np.concatenate(
                    [aux.ids[a:b] for a, b in zip(run_starts, run_stops)])
            tested = view.shape[0]
            hit = np.flatnonzero(poly.contains(view))
            if hit.size:
                chunks.append(cand[hit])
    ids = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    if with_stats:
        return ids, PolytopeStats(
            returned=ids.shape[0], tested=tested, leaves_scanned=leaves_scanned,
            inside_nodes=int(accepted.size), nodes_classified=nodes_classified)
    return ids


# ---------------------------------------------------------------------------
# level-of-detail box fetch


@dataclass(frozen=True)
class NodeDescriptor:
    """Public view of one tree node, keyed by its post-order id."""

    id: int
    level: int
    count: int
    lo: np.ndarray
    hi: np.ndarray


def _boxes_intersecting(tree: KdTree, nodes: np.ndarray, box: BoundingBox) -> np.ndarray:
    # closed node boxes against a half-open query box
    lo, hi = tree.box_lo[nodes], tree.box_hi[nodes]
    hit = ((lo < box.hi) & (hi >= box.lo)).all(axis=1)
    return nodes[hit]


def subtree_at_depth(tree: KdTree, box: BoundingBox, min_nodes: int) -> list[NodeDescriptor]:
    """Nodes of the shallowest level with >= min_nodes boxes meeting `box`.

    Falls through to the leaf level when no level reaches `min_nodes`.
    Only children of intersecting nodes are inspected, so cost scales
    with the answer, not the tree.
    """
    if box.dim != tree.dim:
        raise ValueError("box and tree dimensions differ")
    if min_nodes < 1:
        raise ValueError("min_nodes must be >= 1")
    frontier = _boxes_intersecting(tree, np.array([0], dtype=np.int64), box)
    for level in range(tree.depth + 1):
        if frontier.size >= min_nodes or level == tree.depth:
            break
        children = np.concatenate([2 * frontier + 1, 2 * frontier + 2])
        frontier = np.sort(_boxes_intersecting(tree, children, box))
    return [
        NodeDescriptor(
            id=int(tree.post_order_id[node]),
            level=int(tree._level[node]),
            count=int(tree.counts[node]),
            lo=tree.box_lo[node].copy(),
            hi=tree.box_hi[node].copy(),
        )
        for node in frontier
    ]


# ---------------------------------------------------------------------------
# persistence

# Layout: magic | u16 version | u16 pad | u64 n | u32 dim | u32 depth |
#         split_dim i32 (n_nodes) | split_value f64 (n_nodes) |
#         box_lo f64 (n_nodes*dim) | box_hi f64 (n_nodes*dim) |
#         perm i64 (n) | leaf_offsets i64 (n_leaves+1)
_KD_HEADER = struct.Struct("<4sHHQII")


def save_kdtree(tree: KdTree, path: str) -> None:
    """Write the tree's arrays to `path`; derived fields are rebuilt on load."""
    with open(path, "wb") as fh:
        fh.write(_KD_HEADER.pack(KDTREE_MAGIC, KDTREE_VERSION, 0,
                                 tree.n, tree.dim, tree.depth))
        fh.write(tree.split_dim.tobytes())
        fh.write(tree.split_value.tobytes())
        fh.write(np.ascontiguousarray(tree.box_lo).tobytes())
        fh.write(np.ascontiguousarray(tree.box_hi).tobytes())
        fh.write(tree.perm.tobytes())
        fh.write(tree.leaf_offsets.tobytes())


def load_kdtree(path: str) -> KdTree:
    """Read a tree written by :func:`save_kdtree`."""
    with open(path, "rb") as fh:
        header = fh.read(_KD_HEADER.size)
        if len(header) != _KD_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, _, n, dim, depth = _KD_HEADER.unpack(header)
        if magic != KDTREE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {KDTREE_MAGIC!r}")
        if version != KDTREE_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        n_nodes = 2 ** (depth + 1) - 1
        n_leaves = 2 ** depth

        def block(dtype, count, what):
            width = np.dtype(dtype).itemsize
            buf = fh.read(width * count)
            if len(buf) != width * count:
                raise FormatError(f"{path}: truncated while reading {what}")
            return np.frombuffer(buf, dtype=dtype).copy()

        split_dim = block("<i4", n_nodes, "split dims")
        split_value = block("<f8", n_nodes, "split values")
        box_lo = block("<f8", n_nodes * dim, "lower box bounds").reshape(n_nodes, dim)
        box_hi = block("<f8", n_nodes * dim, "upper box bounds").reshape(n_nodes, dim)
        perm = block("<i8", n, "point permutation")
        leaf_offsets = block("<i8", n_leaves + 1, "leaf offsets")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after declared arrays")
    return KdTree(n, dim, depth, split_dim, split_value, box_lo, box_hi,
                  perm, leaf_offsets)


# ---------------------------------------------------------------------------
# selectivity benchmark


@dataclass(frozen=True)
class SelectivityRow:
    """One benchmark query: achieved selectivity and work relative to a scan."""

    target: float
    selectivity: float
    returned: int
    tested: int
    tested_per_returned: float
    speedup: float
    query_seconds: float
    scan_seconds: float


def _rank_window_box(sorted_cols, center, frac) -> BoundingBox:
    """Axis-aligned box spanning a per-axis rank window of width `frac`
    positioned around `center`."""
    dim = len(sorted_cols)
    n = sorted_cols[0].shape[0]
    lo = np.empty(dim)
    hi = np.empty(dim)
    frac = min(frac, 1.0)
    for d in range(dim):
        col = sorted_cols[d]
        r = np.searchsorted(col, center[d]) / n
        a = min(max(r - frac / 2.0, 0.0), 1.0 - frac)
        lo[d] = col[int(a * (n - 1))]
        hi[d] = col[min(int((a + frac) * (n - 1)), n - 1)]
        if hi[d] <= lo[d]:  # duplicate-heavy column: force a nonempty span
            pad = 1e-9 * max(1.0, abs(float(lo[d])))
            hi[d] = lo[d] + pad
    return BoundingBox(lo, hi)


def _calibrated_box(points: PointSet, sorted_cols, center, target: float) -> BoundingBox:
    """Box around `center` sized so it holds about `target` of all points.

    The per-axis rank window starts at target**(1/D) and a scalar width
    multiplier is bisected against exact containment counts.
    """
    base = target ** (1.0 / points.dim)
    coords = points.coords
    n = points.n

    def mass(alpha):
        box = _rank_window_box(sorted_cols, center, alpha * base)
        return np.count_nonzero(box.contains(coords)) / n, box

    lo_a, hi_a = 0.0, 1.0
    got, box = mass(hi_a)
    while got < target and hi_a * base < 1.0:
        lo_a = hi_a
        hi_a = min(2.0 * hi_a, 1.0 / base)
        got, box = mass(hi_a)
    for _ in range(12):
        mid = 0.5 * (lo_a + hi_a)
        got, cand = mass(mid)
        if got < target:
            lo_a = mid
        else:
            hi_a, box = mid, cand
    return box


def _trimmed_polytope(box: BoundingBox, cuts: int, rng) -> Polytope:
    """The box as a polytope, with `cuts` random corner-trimming halfspaces.

    Every cut keeps the box centre inside, so the query stays non-empty
    for any data mass concentrated there.
    """
    poly = Polytope.from_box(box)
    if cuts == 0:
        return poly
    dim = box.dim
    normals = rng.normal(size=(cuts, dim))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    center = 0.5 * (box.lo + box.hi)
    support = np.abs(normals) @ (0.5 * box.extent)
    offsets = normals @ center + support * rng.uniform(0.3, 0.9, size=cuts)
    return Polytope(np.vstack([poly.normals, normals]),
                    np.concatenate([poly.offsets, offsets]))


def selectivity_curve(tree: KdTree, points: PointSet, targets,
                      seed: int = 0, cuts: int = 0,
                      repeats: int = 1) -> list[SelectivityRow]:
    """Time tree polytope queries against full scans across selectivities.

    For each target fraction a box calibrated to hold roughly that share
    of the points is centred on a randomly chosen data point, optionally
    trimmed by `cuts` random halfspaces, then run both through the tree
    and as a brute-force halfspace scan.  Each query is also checked for
    set equality against its scan.  Timings take the fastest of
    `repeats` runs; rows come back sorted by achieved selectivity.

    Parameters
    ----------
    tree : KdTree
    points : PointSet
        The set `tree` was built over.
    targets : sequence of float
        Requested selectivities, each in (0, 1].
    seed : int
        Drives box placement and cut directions.
    cuts : int
        Corner-trimming halfspaces added to each box.
    repeats : int
        Timing repetitions; the minimum is reported.

    Returns
    -------
    list of SelectivityRow
    """
    targets = [float(t) for t in targets]
    if any(not 0.0 < t <= 1.0 for t in targets):
        raise ValueError("selectivity targets must lie in (0, 1]")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    sorted_cols = [np.sort(points.coords[:, d]) for d in range(points.dim)]
    # one throwaway query so cache building never lands in a timed run
    warm = points.coords[0]
    query_polytope(tree, points, Polytope.from_box(
        BoundingBox(warm - 1e-12, warm + 1e-12)))
    rows = []
    for target in targets:
        center = points.coords[rng.integers(points.n)]
        box = _calibrated_box(points, sorted_cols, center, target)
        poly = _trimmed_polytope(box, cuts, rng)
        query_s = scan_s = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            ids = query_polytope(tree, points, poly)
            t1 = time.perf_counter()
            mask = poly.contains(points.coords)
            t2 = time.perf_counter()
            query_s = min(query_s, t1 - t0)
            scan_s = min(scan_s, t2 - t1)
        if not np.array_equal(np.sort(ids), np.flatnonzero(mask)):
            raise HypergridError("tree query disagrees with the full scan")
        _, stats = query_polytope(tree, points, poly, with_stats=True)
        returned = int(stats.returned)
        rows.append(SelectivityRow(
            target=target,
            selectivity=returned / points.n,
            returned=returned,
            tested=int(stats.tested),
            tested_per_returned=stats.tested / max(returned, 1),
            speedup=scan_s / query_s if query_s > 0 else np.inf,
            query_seconds=query_s,
            scan_seconds=scan_s,
        ))
    rows.sort(key=lambda r: r.selectivity)
    return rows
