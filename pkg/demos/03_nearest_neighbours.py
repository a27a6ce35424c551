"""
Exact nearest neighbours with pruning
=====================================

Run exact k-nearest-neighbour queries on the kd-tree and count how few
leaves each query opens.  A brute-force pass over all points confirms
the answers and sets the timing baseline.
"""

import time

import numpy as np

from hypergrid.dataset import bounding_box, generate_mixture, random_components
from hypergrid.kdtree import build_kdtree
from hypergrid.knn import knn_search, similar_objects

comps = random_components(5, 6, seed=6)
pts = generate_mixture(100_000, 5, comps, seed=7, outlier_fraction=0.02)
tree = build_kdtree(pts)

rng = np.random.default_rng(8)
box = bounding_box(pts)
queries = rng.uniform(box.lo, box.hi, size=(200, 5))

for k in (1, 10, 100):
    leaves, scanned = [], []
    t0 = time.perf_counter()
    for q in queries:
        _, stats = knn_search(tree, pts, q, k, with_stats=True)
        leaves.append(stats.leaves_visited)
        scanned.append(stats.points_scanned)
    per_query = (time.perf_counter() - t0) / len(queries)
    print(f"k={k:3d}: {np.mean(leaves):5.1f} of {tree.n_leaves} leaves, "
          f"{np.mean(scanned):7.0f} of {pts.n} points scanned, "
          f"{1000 * per_query:.2f} ms/query")

# Brute force on a few queries, as the exactness oracle.
print("\nbrute-force check on 5 queries:")
for q in queries[:5]:
    result = knn_search(tree, pts, q, 10)
    d2 = ((pts.coords - q) ** 2).sum(axis=1)
    best = np.argsort(d2, kind="stable")[:10]
    print(f"  ids match: {np.array_equal(result.ids, best)}, "
          f"max distance err {np.abs(result.distances - np.sqrt(d2[best])).max():.1e}")

# Lookups by id: the nearest other members of the same neighbourhood.
anchor = 1234
alike = similar_objects(pts, anchor, 5, tree=tree)
print(f"\npoints most similar to #{anchor}: {alike.ids.tolist()}")
print(f"distances: {np.round(alike.distances, 3).tolist()}")
