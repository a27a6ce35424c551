"""Service endpoints checked byte-for-byte against the module calls
they wrap, plus config parsing, error paths, and live-server runs."""

import io
import json
import threading
import urllib.request

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hypergrid.dataset import BoundingBox, PointSet, bounding_box, generate_mixture, load, random_components, save
from hypergrid.errors import ConfigError, HypergridError
from hypergrid.grid import build_grid, sample_box, save_grid
from hypergrid.kdtree import Polytope, build_kdtree, query_polytope, save_kdtree, subtree_at_depth
from hypergrid.knn import knn_search
from hypergrid.service import (
    DatasetSpec,
    SCHEMA_VERSION,
    ServiceConfig,
    create_app,
    load_config,
    resolve_listen,
    serialize_boxes_json,
    serialize_points_binary,
    serialize_points_json,
    serve,
)
from hypergrid.voronoi import build_voronoi, save_voronoi


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """A small on-disk dataset with grid, kd, and a 2-rung cell ladder."""
    root = tmp_path_factory.mktemp("svc")
    comps = random_components(3, 3, seed=101)
    pts = generate_mixture(2000, 3, comps, seed=102)
    pts = PointSet(pts.coords, labels=pts.labels,
                   targets=np.arange(2000, dtype=np.float64) / 7.0)
    grid = build_grid(pts, base=256, seed=5)
    tree = build_kdtree(pts)
    coarse = build_voronoi(pts, 16, seed=6, probe_budget=5000)
    fine = build_voronoi(pts, 64, seed=7, probe_budget=5000)
    save(pts, str(root / "pts.hgps"))
    save_grid(grid, str(root / "pts.hglg"))
    save_kdtree(tree, str(root / "pts.hgkd"))
    save_voronoi(coarse, str(root / "pts-16.hgvr"))
    save_voronoi(fine, str(root / "pts-64.hgvr"))
    config = ServiceConfig(datasets=(
        DatasetSpec(name="main", points=str(root / "pts.hgps"),
                    grid=str(root / "pts.hglg"), kdtree=str(root / "pts.hgkd"),
                    voronoi=(str(root / "pts-16.hgvr"), str(root / "pts-64.hgvr"))),
        DatasetSpec(name="capped", points=str(root / "pts.hgps"),
                    kdtree=str(root / "pts.hgkd"), row_cap=100),
        DatasetSpec(name="bare", points=str(root / "pts.hgps")),
    ))
    client = TestClient(create_app(config))
    return {"root": root, "points": pts, "grid": grid, "tree": tree,
            "coarse": coarse, "fine": fine, "config": config, "client": client}


def global_box3(world):
    box = world["grid"].box
    pad = 1e-6 * (box.hi - box.lo)
    return {"lo": (box.lo - pad).tolist(), "hi": (box.hi + pad).tolist()}


def test_health_lists_datasets(world):
    r = world["client"].get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["schema_version"] == SCHEMA_VERSION
    assert body["datasets"] == ["bare", "capped", "main"]


# ---------------------------------------------------------------------------
# /sample


def test_sample_matches_the_module_call_byte_for_byte(world):
    req = {"box": global_box3(world), "n": 50}
    r = world["client"].post("/v1/main/sample", json=req)
    assert r.status_code == 200
    box = BoundingBox(np.array(req["box"]["lo"]), np.array(req["box"]["hi"]))
    ids, s = sample_box(world["grid"], world["points"], box, 50, with_stats=True)
    expected = serialize_points_json(
        ids, world["points"].coords[ids], world["points"].targets[ids],
        {"examined": s.examined, "returned": s.returned,
         "layers_read": s.layers_read})
    assert r.content == expected
    assert "X-Elapsed-Ms" in r.headers
    body = r.json()
    assert body["stats"]["examined"] >= body["stats"]["returned"] == len(body["points"])
    assert body["points"][0]["scalar"] == pytest.approx(
        float(world["points"].targets[ids[0]]))


def test_sample_replays_identically(world):
    req = {"box": global_box3(world), "n": 120}
    a = world["client"].post("/v1/main/sample", json=req)
    b = world["client"].post("/v1/main/sample", json=req)
    assert a.content == b.content


def test_sample_disjoint_box_is_empty_success(world):
    box = {"lo": [1e6, 1e6, 1e6], "hi": [1e6 + 1, 1e6 + 1, 1e6 + 1]}
    r = world["client"].post("/v1/main/sample", json={"box": box, "n": 10})
    assert r.status_code == 200
    assert r.json()["points"] == []


def test_sample_binary_negotiation(world):
    req = {"box": global_box3(world), "n": 30}
    r = world["client"].post("/v1/main/sample", json=req,
                             headers={"accept": "application/octet-stream"})
    assert r.status_code == 200
    assert r.headers["content-type"] == "application/octet-stream"
    box = BoundingBox(np.array(req["box"]["lo"]), np.array(req["box"]["hi"]))
    ids = sample_box(world["grid"], world["points"], box, 30)
    expected = serialize_points_binary(
        ids, world["points"].coords[ids], world["points"].targets[ids])
    assert r.content == expected
    assert int(r.headers["X-Returned"]) == ids.shape[0]
    # the payload is a loadable point file whose labels are the ids
    path = world["root"] / "resp.hgps"
    path.write_bytes(r.content)
    back = load(str(path))
    assert np.array_equal(back.labels, ids.astype(np.int32))
    assert np.allclose(back.coords, world["points"].coords[ids])


def test_whole_fixture_sample_returns_the_first_layer():
    comps = random_components(3, 2, seed=111)
    pts = generate_mixture(9216, 3, comps, seed=112)
    grid = build_grid(pts, base=1024, seed=9)
    config = ServiceConfig(datasets=(DatasetSpec(name="fix", points="", ),))
    # bypass file loading: exercise the handler through a tiny in-memory app
    import hypergrid.service as svc

    class Preloaded(svc.LoadedDataset):
        def __init__(self):
            self.name = "fix"
            self.row_cap = svc.DEFAULT_ROW_CAP
            self.points = pts
            self.grid = grid
            self.tree = None
            self.ladder = []

    app = create_app(ServiceConfig(datasets=()))
    # create_app with no datasets serves only /health; use the real app
    # builder with a monkeypatched loader instead
    original = svc.LoadedDataset
    svc.LoadedDataset = lambda spec, cap: Preloaded()
    try:
        client = TestClient(create_app(config))
    finally:
        svc.LoadedDataset = original
    box = grid.box
    pad = 1e-6 * (box.hi - box.lo)
    r = client.post("/v1/fix/sample", json={
        "box": {"lo": (box.lo - pad).tolist(), "hi": (box.hi + pad).tolist()},
        "n": 1024})
    assert r.status_code == 200
    got = sorted(p["id"] for p in r.json()["points"])
    layer_one = np.flatnonzero(grid.layer == 1)
    assert len(got) == 1024
    assert got == sorted(layer_one.tolist())


def test_sample_rejects_malformed_requests(world):
    client = world["client"]
    cases = [
        {},  # no box
        {"box": {"lo": [0, 0], "hi": [1, 1]}, "n": 5},  # wrong dim
        {"box": {"lo": [0, 0, 0]}, "n": 5},  # no hi
        {"box": {"lo": [0, 0, 0], "hi": [1, 1, 0]}, "n": 5},  # empty axis
        {"box": global_box3(world), "n": 0},  # n < 1
        {"box": global_box3(world)},  # n missing
        {"box": global_box3(world), "n": "many"},
        {"box": {"lo": [0, None, 0], "hi": [1, 1, 1]}, "n": 5},
    ]
    for body in cases:
        assert client.post("/v1/main/sample", json=body).status_code == 400
    raw = client.post("/v1/main/sample", content=b"{not json",
                      headers={"content-type": "application/json"})
    assert raw.status_code == 400
    assert client.post("/v1/nowhere/sample",
                       json={"box": global_box3(world), "n": 5}).status_code == 404
    assert client.post("/v1/bare/sample",
                       json={"box": global_box3(world), "n": 5}).status_code == 400


# ---------------------------------------------------------------------------
# /knn


def test_knn_matches_the_module_call(world):
    q = world["points"].coords[123].tolist()
    r = world["client"].post("/v1/main/knn", json={"point": q, "k": 7})
    assert r.status_code == 200
    result, s = knn_search(world["tree"], world["points"],
                           np.array(q), 7, with_stats=True)
    expected = serialize_points_json(
        result.ids, world["points"].coords[result.ids], result.distances,
        {"examined": s.points_scanned, "returned": 7,
         "leaves_visited": s.leaves_visited,
         "frontier_pushes": s.frontier_pushes,
         "audit_admissions": s.audit_admissions})
    assert r.content == expected


def test_knn_of_a_dataset_point_returns_it_first(world):
    q = world["points"].coords[77].tolist()
    r = world["client"].post("/v1/main/knn", json={"point": q, "k": 1})
    body = r.json()
    assert body["points"][0]["id"] == 77
    assert body["points"][0]["scalar"] == 0.0


def test_knn_validation(world):
    client = world["client"]
    assert client.post("/v1/main/knn", json={"point": [0, 0, 0], "k": 2001}).status_code == 400
    assert client.post("/v1/main/knn", json={"point": [0, 0], "k": 1}).status_code == 400
    assert client.post("/v1/main/knn", json={"point": [0, 0, 0], "k": 0}).status_code == 400
    assert client.post("/v1/main/knn", json={"point": [0, 0, 0]}).status_code == 400
    assert client.post("/v1/bare/knn", json={"point": [0, 0, 0], "k": 1}).status_code == 400


# ---------------------------------------------------------------------------
# /polytope


def test_polytope_matches_the_module_call(world):
    center = world["points"].coords[500]
    normals = np.vstack([np.eye(3), -np.eye(3)])
    offsets = np.concatenate([center + 1.5, -(center - 1.5)])
    r = world["client"].post("/v1/main/polytope", json={
        "normals": normals.tolist(), "offsets": offsets.tolist()})
    assert r.status_code == 200
    poly = Polytope(normals, offsets)
    ids, s = query_polytope(world["tree"], world["points"], poly, with_stats=True)
    expected = serialize_points_json(
        ids, world["points"].coords[ids], world["points"].targets[ids],
        {"examined": s.tested + s.returned, "returned": s.returned,
         "tested": s.tested, "leaves_scanned": s.leaves_scanned,
         "inside_nodes": s.inside_nodes,
         "nodes_classified": s.nodes_classified})
    assert r.content == expected
    assert r.json()["stats"]["examined"] >= r.json()["stats"]["returned"]


def test_polytope_row_cap_returns_413_with_the_cap(world):
    box = bounding_box(world["points"])
    poly = Polytope.from_box(BoundingBox(box.lo - 1, box.hi + 1))
    r = world["client"].post("/v1/capped/polytope", json={
        "normals": poly.normals.tolist(), "offsets": poly.offsets.tolist()})
    assert r.status_code == 413
    body = r.json()
    assert body["stats"]["cap"] == 100
    assert body["stats"]["matched"] == 2000
    assert "error" in body


def test_polytope_validation(world):
    client = world["client"]
    assert client.post("/v1/main/polytope", json={"normals": [[1, 0, 0]]}).status_code == 400
    assert client.post("/v1/main/polytope", json={
        "normals": [[1, 0]], "offsets": [1]}).status_code == 400
    assert client.post("/v1/main/polytope", json={
        "normals": [[0, 0, 0]], "offsets": [1]}).status_code == 400


# ---------------------------------------------------------------------------
# /kdboxes


def test_kdboxes_cover_the_request(world):
    box = bounding_box(world["points"])
    req_box = {"lo": box.lo.tolist(), "hi": box.hi.tolist()}
    r = world["client"].post("/v1/main/kdboxes", json={"box": req_box, "n": 8})
    assert r.status_code == 200
    nodes = subtree_at_depth(world["tree"], BoundingBox(
        np.array(req_box["lo"]), np.array(req_box["hi"])), 8)
    expected = serialize_boxes_json(
        nodes, {"examined": len(nodes), "returned": len(nodes)})
    assert r.content == expected
    body = r.json()
    assert len(body["boxes"]) >= 8
    assert sum(b["count"] for b in body["boxes"]) == world["points"].n

    root = world["client"].post("/v1/main/kdboxes", json={"box": req_box, "n": 1})
    assert len(root.json()["boxes"]) == 1
    assert root.json()["boxes"][0]["count"] == world["points"].n


def test_kdboxes_intersect_a_partial_box(world):
    full = bounding_box(world["points"])
    mid = (full.lo + full.hi) / 2.0
    req = {"lo": full.lo.tolist(), "hi": mid.tolist()}
    r = world["client"].post("/v1/main/kdboxes", json={"box": req, "n": 4})
    for b in r.json()["boxes"]:
        assert np.all(np.array(b["lo"]) < mid)
        assert np.all(np.array(b["hi"]) >= full.lo)


# ---------------------------------------------------------------------------
# /delaunay_edges and /voronoi_cells


def test_edge_ladder_escalates_to_the_finer_rung(world):
    coarse_edges = world["coarse"].adj_indices.shape[0] // 2
    r1 = world["client"].post("/v1/main/delaunay_edges", json={"min_edges": 1})
    assert r1.status_code == 200
    b1 = r1.json()
    assert b1["level"] == {"rung": 0, "cells": 16}
    assert len(b1["edges"]) == coarse_edges

    r2 = world["client"].post("/v1/main/delaunay_edges",
                              json={"min_edges": coarse_edges + 1})
    b2 = r2.json()
    assert b2["level"] == {"rung": 1, "cells": 64}
    assert len(b2["edges"]) > coarse_edges

    # seed coordinate table covers exactly the ids used by the edges
    used = sorted({i for e in b2["edges"] for i in e})
    assert b2["seed_ids"] == used
    assert len(b2["seed_coords"]) == len(used)


def test_edges_restricted_to_a_box(world):
    full = bounding_box(world["points"])
    mid = (full.lo + full.hi) / 2.0
    box = {"lo": full.lo.tolist(), "hi": mid.tolist()}
    r = world["client"].post("/v1/main/delaunay_edges",
                             json={"box": box, "min_edges": 1})
    body = r.json()
    seeds = world["coarse" if body["level"]["rung"] == 0 else "fine"].seeds
    for a, b in body["edges"]:
        assert np.all(seeds[a] < mid) and np.all(seeds[b] < mid)
    assert world["client"].post(
        "/v1/bare/delaunay_edges", json={"min_edges": 1}).status_code == 400


def test_voronoi_cells_serve_volumes_and_members(world):
    r = world["client"].post("/v1/main/voronoi_cells", json={})
    body = r.json()
    assert body["level"] == {"rung": 0, "cells": 16}
    assert len(body["cells"]) == 16
    coarse = world["coarse"]
    counts = coarse.cell_counts()
    for cell in body["cells"]:
        c = cell["cell"]
        assert cell["volume"] == pytest.approx(float(coarse.volumes[c]))
        assert cell["count"] == int(counts[c])
        assert "members" not in cell

    fine = world["client"].post("/v1/main/voronoi_cells",
                                json={"min_cells": 17, "include_members": True})
    fbody = fine.json()
    assert fbody["level"]["cells"] == 64
    got = sorted(m for cell in fbody["cells"] for m in cell["members"])
    assert got == list(range(world["points"].n))


def test_voronoi_cells_box_filter(world):
    full = bounding_box(world["points"])
    mid = (full.lo + full.hi) / 2.0
    r = world["client"].post("/v1/main/voronoi_cells", json={
        "box": {"lo": full.lo.tolist(), "hi": mid.tolist()}})
    body = r.json()
    seeds = world["coarse" if body["level"]["rung"] == 0 else "fine"].seeds
    for cell in body["cells"]:
        assert np.all(seeds[cell["cell"]] < mid)


# ---------------------------------------------------------------------------
# concurrency (in-process)


def test_concurrent_samples_equal_serial_replay(world):
    req = {"box": global_box3(world), "n": 64}
    serial = world["client"].post("/v1/main/sample", json=req).content
    app = create_app(world["config"])
    results = [None] * 20

    def hit(i):
        with TestClient(app) as client:
            results[i] = client.post("/v1/main/sample", json=req).content

    threads = [threading.Thread(target=hit, args=(i,)) for i in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == serial for r in results)


# ---------------------------------------------------------------------------
# config and lifecycle


def test_config_round_trip(tmp_path, world):
    root = world["root"]
    cfg_path = tmp_path / "svc.ini"
    cfg_path.write_text(
        "[service]\n"
        "listen = 0.0.0.0:9100\n"
        "row_cap = 5000\n"
        f"[dataset:main]\n"
        f"points = {root}/pts.hgps\n"
        f"grid = {root}/pts.hglg\n"
        f"kdtree = {root}/pts.hgkd\n"
        f"voronoi = {root}/pts-16.hgvr, {root}/pts-64.hgvr\n"
        "[dataset:small]\n"
        "points = pts-relative.hgps\n"
        "row_cap = 17\n")
    cfg = load_config(str(cfg_path))
    assert cfg.host == "0.0.0.0" and cfg.port == 9100
    assert cfg.row_cap == 5000
    by_name = {d.name: d for d in cfg.datasets}
    assert by_name["main"].voronoi == (f"{root}/pts-16.hgvr", f"{root}/pts-64.hgvr")
    assert by_name["small"].points == str(tmp_path / "pts-relative.hgps")
    assert by_name["small"].row_cap == 17
    assert by_name["main"].row_cap is None


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.ini"))
    bad = tmp_path / "bad.ini"
    bad.write_text("[service]\nlisten = nocolon\n[dataset:x]\npoints = p\n")
    with pytest.raises(ConfigError, match="host:port"):
        load_config(str(bad))
    nopoints = tmp_path / "np.ini"
    nopoints.write_text("[dataset:x]\ngrid = g\n")
    with pytest.raises(ConfigError, match="points"):
        load_config(str(nopoints))
    empty = tmp_path / "empty.ini"
    empty.write_text("[service]\n")
    with pytest.raises(ConfigError, match="dataset"):
        load_config(str(empty))


def test_listen_env_override(monkeypatch):
    cfg = ServiceConfig(host="10.0.0.1", port=80)
    monkeypatch.delenv("HYPERGRID_LISTEN", raising=False)
    assert resolve_listen(cfg) == ("10.0.0.1", 80)
    monkeypatch.setenv("HYPERGRID_LISTEN", "127.0.0.1:7777")
    assert resolve_listen(cfg) == ("127.0.0.1", 7777)


def test_missing_sidecar_is_a_startup_error_naming_the_file(world, tmp_path):
    ghost = str(tmp_path / "ghost.hgkd")
    config = ServiceConfig(datasets=(
        DatasetSpec(name="x", points=str(world["root"] / "pts.hgps"),
                    kdtree=ghost),))
    with pytest.raises(ConfigError, match="ghost.hgkd"):
        create_app(config)


def test_mismatched_sidecar_is_rejected(world, tmp_path):
    other = generate_mixture(500, 3, random_components(3, 2, seed=5), seed=6)
    tree_path = str(tmp_path / "other.hgkd")
    save_kdtree(build_kdtree(other), tree_path)
    config = ServiceConfig(datasets=(
        DatasetSpec(name="x", points=str(world["root"] / "pts.hgps"),
                    kdtree=tree_path),))
    with pytest.raises(ConfigError, match="built over"):
        create_app(config)


def test_serve_runs_a_real_server(world):
    config = ServiceConfig(host="127.0.0.1", port=0,
                           datasets=world["config"].datasets)
    handle = serve(config)
    try:
        with urllib.request.urlopen(f"{handle.url}/health", timeout=10) as resp:
            assert resp.status == 200
            assert json.loads(resp.read())["status"] == "ok"
        req = urllib.request.Request(
            f"{handle.url}/v1/main/sample",
            data=json.dumps({"box": global_box3(world), "n": 16}).encode(),
            headers={"content-type": "application/json"})
        with urllib.request.urlopen(req, timeout=10) as resp:
            assert resp.status == 200
            assert "X-Elapsed-Ms" in resp.headers
            body = json.loads(resp.read())
            assert len(body["points"]) >= 16
    finally:
        handle.stop()


def test_serve_reports_port_conflicts(world):
    config = ServiceConfig(host="127.0.0.1", port=0,
                           datasets=world["config"].datasets)
    first = serve(config)
    try:
        clash = ServiceConfig(host="127.0.0.1", port=first.port,
                              datasets=world["config"].datasets)
        with pytest.raises(HypergridError, match="failed to start"):
            serve(clash)
    finally:
        first.stop()
