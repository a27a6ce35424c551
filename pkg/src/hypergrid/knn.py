"""Exact k-nearest-neighbour search over the balanced kd-tree.

The search keeps two collections: a result list of the best k candidates
so far, sorted by (distance, id), and a frontier of leaves keyed by
entry bound.  Let m be the current k-th distance (infinite until the
list is full).  Starting from the leaf whose partition cell contains the
query point p:

1. scan the leaf: merge its points into the result list.  No leaf point
   can beat the leaf's distance floor (the distance from p to its tight
   box), so if f results are already closer than the floor, only the
   leaf's best (k - f) candidates can possibly enter and only those are
   merged;
2. generate boundary points of the leaf's partition cell: the projection
   of p onto each of the 2D faces, plus the cell's corners;
3. every boundary point b with distance(p, b) <= m admits the unexamined
   leaves whose cells touch b, pushing them with entry bound
   distance(p, b);
4. pop the smallest entry bound and repeat while it is <= m.

Admission and the halt test are non-strict in m so that equal-distance
points beyond a face still compete on id order, which keeps results
bit-identical to a full sort by (distance, id).

Partition cells (split slabs clipped to the root box) tile the root box,
so growing through shared faces reaches everything that matters in
general position.  Degenerate geometry (stacked duplicate coordinates
can make a cell's face collapse to zero width) is caught by a final
audit sweep over the leaf tight boxes, admitting any unexamined leaf
within m.  The sweep almost always confirms the frontier growth and
admits nothing; when it does admit, the loop resumes, so the result is
exact unconditionally.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .dataset import PointSet
from .kdtree import KdTree


@dataclass(frozen=True)
class KnnStats:
    """Work accounting for one query."""

    leaves_visited: int
    points_scanned: int
    frontier_pushes: int
    audit_admissions: int   # leaves only the final sweep found; 0 in general position


@dataclass(frozen=True)
class KnnResult:
    """Ids and distances of the k nearest points, sorted by (distance, id)."""

    ids: np.ndarray
    distances: np.ndarray


class _TreeAux:
    """Per-tree constants the search reuses across queries."""

    def __init__(self, tree: KdTree):
        d = tree.dim
        n_nodes = tree.n_nodes
        first = tree.n_leaves - 1
        # partition cells of every node: split slabs clipped to the root box
        lo = np.empty((n_nodes, d))
        hi = np.empty((n_nodes, d))
        lo[0] = tree.box_lo[0]
        hi[0] = tree.box_hi[0]
        for level in range(tree.depth):
            nodes = np.arange(2 ** level - 1, 2 ** (level + 1) - 1)
            sd = tree.split_dim[nodes]
            sv = tree.split_value[nodes]
            left, right = 2 * nodes + 1, 2 * nodes + 2
            lo[left] = lo[nodes]
            hi[left] = hi[nodes]
            lo[right] = lo[nodes]
            hi[right] = hi[nodes]
            hi[left, sd] = np.minimum(hi[nodes, sd], sv)
            lo[right, sd] = np.maximum(lo[nodes, sd], sv)
        self.cell_lo = lo[first:]
        self.cell_hi = hi[first:]
        # leaf tight boxes, contiguous for the audit sweep
        self.tight_lo = np.ascontiguousarray(tree.box_lo[first:])
        self.tight_hi = np.ascontiguousarray(tree.box_hi[first:])
        # plain lists index faster than numpy scalars in the descent loops
        self.split_dim = tree.split_dim.tolist()
        self.split_value = tree.split_value.tolist()
        self.leaf_starts = tree.leaf_offsets[:-1].tolist()
        self.leaf_stops = tree.leaf_offsets[1:].tolist()
        self.corner_bits = ((np.arange(2 ** d)[:, None] >> np.arange(d)) & 1) == 1 \
            if d <= 12 else None


def _aux(tree: KdTree) -> _TreeAux:
    cached = getattr(tree, "_knn_aux", None)
    if cached is None:
        cached = _TreeAux(tree)
        tree._knn_aux = cached
    return cached


def _locate_leaf(aux: _TreeAux, first_leaf: int, p) -> int:
    """Leaf ordinal of the partition cell containing p (points on a split
    plane belong to the left cell, matching the build rule)."""
    node = 0
    split_dim, split_value = aux.split_dim, aux.split_value
    while node < first_leaf:
        if p[split_dim[node]] <= split_value[node]:
            node = 2 * node + 1
        else:
            node = 2 * node + 2
    return node - first_leaf


def _leaves_containing(aux: _TreeAux, first_leaf: int, b) -> list[int]:
    """Ordinals of every leaf whose closed partition cell contains b.

    Boundary points sit exactly on split planes (their face coordinates
    are split values), so the descent branches both ways on equality to
    reach all adjacent cells.
    """
    split_dim, split_value = aux.split_dim, aux.split_value
    found = []
    stack = [0]
    while stack:
        node = stack.pop()
        while node < first_leaf:
            sv = split_value[node]
            v = b[split_dim[node]]
            if v < sv:
                node = 2 * node + 1
            elif v > sv:
                node = 2 * node + 2
            else:
                stack.append(2 * node + 2)
                node = 2 * node + 1
        found.append(node - first_leaf)
    return found


def knn_search(tree: KdTree, points: PointSet, query, k: int,
               with_stats: bool = False):
    """The k nearest points to `query`, exact, sorted by (distance, id).

    Parameters
    ----------
    tree : KdTree
        Built over `points`.
    query : array-like of shape (dim,)
        May lie anywhere, inside or outside the data's bounding box.
    k : int
        Number of neighbours, 1 <= k <= N.

    Returns
    -------
    KnnResult, or (KnnResult, KnnStats) when with_stats is set.
    """
    p = np.ascontiguousarray(query, dtype=np.float64)
    if p.shape != (tree.dim,):
        raise ValueError(f"query must have shape ({tree.dim},), got {p.shape}")
    if not np.isfinite(p).all():
        raise ValueError("query must be finite")
    if not 1 <= k <= tree.n:
        raise ValueError(f"k must be in [1, {tree.n}]")

    aux = _aux(tree)
    d = tree.dim
    first_leaf = tree.n_leaves - 1
    coords = points.coords
    perm = tree.perm
    examined = np.zeros(tree.n_leaves, dtype=bool)
    best_ids = np.empty(0, dtype=np.int64)
    best_d = np.empty(0, dtype=np.float64)
    heap: list[tuple[float, int]] = []
    leaves_visited = points_scanned = pushes = audit_admissions = 0
    m = np.inf
    p_list = p.tolist()

    n_bpts = 2 * d + (aux.corner_bits.shape[0] if aux.corner_bits is not None else 0)
    bpts = np.empty((n_bpts, d))
    axes = np.arange(d)

    def scan(leaf: int) -> None:
        nonlocal best_ids, best_d, leaves_visited, points_scanned, m
        examined[leaf] = True
        leaves_visited += 1
        cand = perm[aux.leaf_starts[leaf]:aux.leaf_stops[leaf]]
        delta = coords[cand] - p
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
        points_scanned += cand.shape[0]
        # no leaf point can be closer than the leaf's tight box, so results
        # already closer than that are protected and only the leaf's best
        # (k - protected) candidates can enter the list
        gap = np.maximum(np.maximum(aux.tight_lo[leaf] - p, p - aux.tight_hi[leaf]), 0.0)
        floor = float(np.sqrt(gap @ gap))
        protected = int(np.searchsorted(best_d, floor, side="left"))
        need = k - protected
        if need <= 0:
            return
        if need < dist.shape[0]:
            take = np.lexsort((cand, dist))[:need]
            cand, dist = cand[take], dist[take]
        ids = np.concatenate([best_ids, cand])
        dd = np.concatenate([best_d, dist])
        order = np.lexsort((ids, dd))[:k]
        best_ids, best_d = ids[order], dd[order]
        if best_d.shape[0] >= k:
            m = float(best_d[k - 1])

    def grow(leaf: int) -> None:
        nonlocal pushes
        lo = aux.cell_lo[leaf]
        hi = aux.cell_hi[leaf]
        np.clip(p, lo, hi, out=bpts[0])
        bpts[1:2 * d] = bpts[0]
        bpts[2 * axes, axes] = lo
        bpts[2 * axes + 1, axes] = hi
        if aux.corner_bits is not None:
            np.copyto(bpts[2 * d:], np.where(aux.corner_bits, hi, lo))
        delta = bpts - p
        bdist = np.einsum("ij,ij->i", delta, delta)
        np.sqrt(bdist, out=bdist)
        for i in np.flatnonzero(bdist <= m):
            bd = float(bdist[i])
            b = bpts[i].tolist()
            for nb in _leaves_containing(aux, first_leaf, b):
                if not examined[nb]:
                    heapq.heappush(heap, (bd, nb))
                    pushes += 1

    heapq.heappush(heap, (0.0, _locate_leaf(aux, first_leaf, p_list)))
    pushes += 1
    while True:
        while heap:
            bound, leaf = heapq.heappop(heap)
            if examined[leaf]:
                continue
            if bound > m:
                heap.clear()
                break
            scan(leaf)
            grow(leaf)
        # audit sweep: one vectorized pass over every leaf tight box
        gap_lo = aux.tight_lo - p
        gap_hi = p - aux.tight_hi
        np.maximum(gap_lo, gap_hi, out=gap_lo)
        np.maximum(gap_lo, 0.0, out=gap_lo)
        box_d = np.sqrt(np.einsum("ij,ij->i", gap_lo, gap_lo))
        stragglers = np.flatnonzero((box_d <= m) & ~examined)
        if stragglers.shape[0] == 0:
            break
        audit_admissions += stragglers.shape[0]
        for leaf in stragglers:
            heapq.heappush(heap, (float(box_d[leaf]), int(leaf)))
            pushes += 1

    result = KnnResult(ids=best_ids, distances=best_d)
    if with_stats:
        return result, KnnStats(
            leaves_visited=leaves_visited, points_scanned=points_scanned,
            frontier_pushes=pushes, audit_admissions=audit_admissions)
    return result


def similar_objects(points: PointSet, query_id: int, k: int,
                    tree: KdTree | None = None) -> KnnResult:
    """The k points most similar to an existing point, excluding itself.

    Builds the tree on the fly when one is not supplied.
    """
    if not 0 <= query_id < points.n:
        raise ValueError(f"query_id must be in [0, {points.n})")
    if not 1 <= k <= points.n - 1:
        raise ValueError(f"k must be in [1, {points.n - 1}]")
    if tree is None:
        from .kdtree import build_kdtree
        tree = build_kdtree(points)
    res = knn_search(tree, points, points.coords[query_id], k + 1)
    keep = res.ids != query_id
    return KnnResult(ids=res.ids[keep][:k], distances=res.distances[keep][:k])
