"""
Progressive sampling with the layered grid
==========================================

Build the layered grid over a clustered synthetic set, then pull
samples of growing size from one box.  Each request reads whole layers
until it has enough points, so results are nested, follow the local
density, and the work stays proportional to what comes back.
"""

import numpy as np

from hypergrid.dataset import BoundingBox, generate_mixture, random_components
from hypergrid.grid import build_grid, sample_box

# A 3-D set with three well separated blobs; base 256 keeps the
# layer progression visible at this size (256, 2048, 16384, ...).
comps = random_components(3, 3, seed=1)
pts = generate_mixture(50_000, 3, comps, seed=2, outlier_fraction=0.02)
grid = build_grid(pts, base=256, seed=0)

print(f"{pts.n} points, {grid.n_layers} layers")
for gl in grid.layers:
    print(f"  layer {gl.index}: {gl.count:6d} points on a "
          f"{gl.resolution}^3 grid")

# Query a box around the densest component and grow the request.
center = comps[0].mean
box = BoundingBox(center - 2.5, center + 2.5)

print("\nn requested -> returned, candidates examined, layers read")
previous = set()
for n in (32, 128, 512, 2048, 8192):
    ids, stats = sample_box(grid, pts, box, n, with_stats=True)
    nested = previous <= set(ids.tolist())
    previous = set(ids.tolist())
    print(f"  {n:5d} -> {stats.returned:5d} returned, "
          f"{stats.examined:5d} examined, {stats.layers_read} layers, "
          f"nested={nested}")

# The sample is density-faithful: splitting the box in half along x
# should split the sample roughly like it splits the underlying data.
ids = sample_box(grid, pts, box, 2048)
mid = center[0]
inbox = pts.coords[((pts.coords >= box.lo) & (pts.coords < box.hi)).all(axis=1)]
true_left = (inbox[:, 0] < mid).mean()
got_left = (pts.coords[ids, 0] < mid).mean()
print(f"\nleft-half mass: data {true_left:.3f}, sample {got_left:.3f}")
