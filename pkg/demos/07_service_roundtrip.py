"""
Serving indexes over HTTP
=========================

Write a dataset and its indexes to disk, start the query service on an
ephemeral port, and round-trip the main endpoints: level-of-detail
samples, nearest neighbours, and a region query.
"""

import json
import tempfile
import urllib.request
from pathlib import Path

import numpy as np

from hypergrid.dataset import bounding_box, generate_mixture, random_components, save
from hypergrid.grid import build_grid, save_grid
from hypergrid.kdtree import build_kdtree, save_kdtree
from hypergrid.service import load_config, serve
from hypergrid.voronoi import build_voronoi, save_voronoi

workdir = Path(tempfile.mkdtemp(prefix="hypergrid-demo-"))
comps = random_components(3, 3, seed=18)
pts = generate_mixture(20_000, 3, comps, seed=19)
save(pts, str(workdir / "demo.hgps"))
save_grid(build_grid(pts, base=256, seed=0), str(workdir / "demo.hglg"))
save_kdtree(build_kdtree(pts), str(workdir / "demo.hgkd"))
save_voronoi(build_voronoi(pts, 64, seed=2), str(workdir / "demo.hgvr"))

config_path = workdir / "service.ini"
config_path.write_text(f"""\
[service]
listen = 127.0.0.1:0

[dataset:demo]
points = {workdir / 'demo.hgps'}
grid = {workdir / 'demo.hglg'}
kdtree = {workdir / 'demo.hgkd'}
voronoi = {workdir / 'demo.hgvr'}
""")

# Port 0 lets the OS pick; the handle reports where it landed.
handle = serve(load_config(str(config_path)))
root = f"http://{handle.host}:{handle.port}"
print(f"service up at {root}")


def post(path, payload):
    req = urllib.request.Request(f"{root}{path}",
                                 data=json.dumps(payload).encode(),
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.load(resp), resp.headers

try:
    with urllib.request.urlopen(f"{root}/health") as resp:
        print("health:", json.load(resp))

    box = bounding_box(pts)
    body = {"box": {"lo": list(box.lo), "hi": list(box.hi)}, "n": 500}
    sample, headers = post("/v1/demo/sample", body)
    print(f"sample: {len(sample['points'])} points, stats {sample['stats']}, "
          f"served in {headers['X-Elapsed-Ms']} ms")

    knn, _ = post("/v1/demo/knn", {"point": list(comps[0].mean), "k": 5})
    print("knn ids:", [p["id"] for p in knn["points"]])

    # The polytope endpoint speaks halfspaces: rows of normals and the
    # matching offsets, with a point inside when normals @ x <= offsets.
    # An axis-aligned box around the first component is the stack
    # [I; -I] with offsets [hi; -lo].
    center = comps[0].mean
    eye = np.eye(len(center))
    normals = np.vstack([eye, -eye])
    offsets = np.concatenate([center + 2.0, -(center - 2.0)])
    region, _ = post("/v1/demo/polytope", {
        "normals": normals.tolist(), "offsets": offsets.tolist()})
    print(f"region query: {region['stats']['returned']} points, "
          f"{region['stats']['tested']} tested individually")

    cells, _ = post("/v1/demo/voronoi_cells", {"min_cells": 1})
    level = cells["level"]
    print(f"voronoi layer: {level['cells']} cells at rung {level['rung']}")
finally:
    handle.stop()
    print("service stopped")
