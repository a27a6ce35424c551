"""Density clustering over a cell map: the basin spanning forest.

Each Voronoi cell gets a density (members per unit volume, or inverse
volume), then every cell points at its densest strictly-denser
neighbour.  Cells denser than all their neighbours become roots, and the
forest's connected components are the clusters: each basin is the set of
cells that drain uphill to one local density peak.  No distance
threshold or cluster count is chosen anywhere; the adjacency graph and
the densities decide everything, so the result is invariant under
rescaling all densities by a common factor.

Spurious peaks from sampling noise can be absorbed with `merge_tau`:
a basin whose boundary toward a stronger basin is nearly as high as its
own peak (saddle >= merge_tau * peak) is not a separate mode and is
merged into that neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .voronoi import VoronoiIndex

_DENSITY_MODES = ("count", "volume")


@dataclass(frozen=True)
class BasinForest:
    """Clusters of cells draining to local density peaks.

    Attributes
    ----------
    parent : ndarray
        Parent cell of each cell, -1 at basin roots.  Without merging,
        the parent is always strictly denser; merged roots point into
        the absorbing basin through the saddle edge.
    labels : ndarray
        Cluster index of each cell; clusters are numbered by descending
        root density (root id breaks ties).
    roots : ndarray
        Root cell of each cluster, in label order.
    density : ndarray
        The per-cell density the forest was grown on.
    fallback : ndarray of bool
        Cells whose measured volume was zero and was floored at the
        one-sample resolution limit of the volume estimate.
    merged : int
        Number of roots dissolved by `merge_tau`.
    """

    parent: np.ndarray
    labels: np.ndarray
    roots: np.ndarray
    density: np.ndarray
    fallback: np.ndarray
    merged: int

    def __post_init__(self):
        for arr in (self.parent, self.labels, self.roots, self.density,
                    self.fallback):
            arr.flags.writeable = False

    @property
    def n_clusters(self) -> int:
        return self.roots.shape[0]


def cell_density(index: VoronoiIndex, mode: str = "count"):
    """Per-cell density and the zero-volume fallback mask.

    mode "count" divides member count by cell volume; mode "volume"
    uses inverse volume alone (each cell as one quantum of mass).  Cells
    the volume sampler never hit get volume box_volume / n_samples, the
    smallest value one hit could have resolved.
    """
    if mode not in _DENSITY_MODES:
        raise ValueError(f"mode must be one of {_DENSITY_MODES}")
    eps = index.box.volume / max(index.volume_samples, 1)
    fallback = index.volume_counts == 0
    vol = np.where(fallback, eps, index.volumes)
    if mode == "count":
        density = index.cell_counts() / vol
    else:
        density = 1.0 / vol
    return density, fallback


def _resolve_roots(parent: np.ndarray) -> np.ndarray:
    """Root cell reached from each cell, by pointer doubling."""
    jump = np.where(parent < 0, np.arange(parent.shape[0]), parent)
    while True:
        nxt = jump[jump]
        if np.array_equal(nxt, jump):
            return jump
        jump = nxt


def build_bst(index: VoronoiIndex, mode: str = "count",
              merge_tau: float | None = None) -> BasinForest:
    """Grow the basin spanning forest over `index`.

    Parameters
    ----------
    index : VoronoiIndex
    mode : str
        Density definition, see :func:`cell_density`.
    merge_tau : float, optional
        In [0, 1].  A root r is dissolved when the highest saddle from
        its basin into a stronger basin reaches merge_tau * density[r];
        weaker basins merge first and merging repeats until stable.
        None disables merging.
    """
    if merge_tau is not None and not 0.0 <= merge_tau <= 1.0:
        raise ValueError("merge_tau must be in [0, 1]")
    density, fallback = cell_density(index, mode)
    n = index.n_cells
    cells = np.arange(n)
    src = np.repeat(cells, np.diff(index.adj_indptr))
    dst = index.adj_indices

    # parent = densest strictly-denser neighbour, smallest id on ties
    best = np.full(n, -1, dtype=np.int64)
    if dst.shape[0]:
        order = np.lexsort((dst, -density[dst], src))
        starts = np.searchsorted(src[order], cells)
        have = np.diff(index.adj_indptr) > 0
        best[have] = dst[order][starts[have]]
    takes = (best >= 0) & (density[np.clip(best, 0, None)] > density)
    parent = np.where(takes, best, np.int64(-1))

    merged = 0
    if merge_tau is not None and dst.shape[0]:
        while True:
            root_of = _resolve_roots(parent)
            cross = root_of[src] != root_of[dst]
            if not cross.any():
                break
            a, b = src[cross], dst[cross]
            ra, rb = root_of[a], root_of[b]
            # keep directed edges from the weaker basin to the stronger,
            # strength being (density, smaller id) so ties stay acyclic
            uphill = (density[rb] > density[ra]) | (
                (density[rb] == density[ra]) & (rb < ra))
            a, b, ra, rb = a[uphill], b[uphill], ra[uphill], rb[uphill]
            if a.shape[0] == 0:
                break
            saddle = np.minimum(density[a], density[b])
            order = np.lexsort((a, b, -density[rb], -saddle, ra))
            ra_sorted = ra[order]
            weak_roots = np.unique(ra_sorted)
            top = order[np.searchsorted(ra_sorted, weak_roots)]
            eligible = saddle[top] >= merge_tau * density[weak_roots]
            if not eligible.any():
                break
            parent[weak_roots[eligible]] = b[top[eligible]]
            merged += int(eligible.sum())

    root_of = _resolve_roots(parent)
    roots = np.flatnonzero(parent < 0)
    roots = roots[np.lexsort((roots, -density[roots]))]
    label_of = np.empty(n, dtype=np.int64)
    label_of[roots] = np.arange(roots.shape[0])
    labels = label_of[root_of]
    return BasinForest(parent=parent, labels=labels, roots=roots,
                       density=density, fallback=fallback, merged=merged)


def point_labels(forest: BasinForest, index: VoronoiIndex) -> np.ndarray:
    """Cluster index of every point, through its cell."""
    if forest.labels.shape[0] != index.n_cells:
        raise ValueError("forest and index have different cell counts")
    return forest.labels[index.assignment]


def evaluate_purity(true_labels, predicted_labels) -> float:
    """Fraction of points whose true label is their cluster's majority.

    Insensitive to cluster numbering and to one true class splitting
    across several clusters, so it measures whether clusters mix classes
    rather than whether the count matches.
    """
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("label arrays must be equal-length vectors")
    if t.shape[0] == 0:
        raise ValueError("label arrays must not be empty")
    correct = 0
    for cluster in np.unique(p):
        _, counts = np.unique(t[p == cluster], return_counts=True)
        correct += int(counts.max())
    return correct / t.shape[0]
