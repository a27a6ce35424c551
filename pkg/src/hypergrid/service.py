"""HTTP query service over prebuilt spatial indexes.

One process serves any number of read-only datasets, each a point file
plus optional sidecar indexes (layered grid, kd-tree, and a ladder of
Voronoi cell maps at increasing seed counts).  Endpoints live under
/v1/<dataset>/ and every response body is deterministic: identical
requests produce identical bytes, with wall-clock timing reported only
in the X-Elapsed-Ms response header so replays stay byte-equal.

Request bodies are JSON; responses are JSON with an explicit
schema_version, or the dataset binary column encoding when the client
sends `Accept: application/octet-stream` on a point-returning endpoint
(ids ride in the labels column, the per-point scalar in targets, and
counters move to X-Examined / X-Returned headers).

Endpoints
---------
GET  /health                        service status and dataset names
POST /v1/<ds>/sample                {box:{lo,hi}, n} -> density-faithful points
POST /v1/<ds>/knn                   {point, k} -> nearest points, distance as scalar
POST /v1/<ds>/polytope              {normals, offsets} -> exact members
POST /v1/<ds>/kdboxes               {box, n} -> kd nodes covering the box
POST /v1/<ds>/delaunay_edges        {box?, min_edges} -> cell adjacency edges,
                                    served from the coarsest ladder rung that
                                    has at least min_edges in the box
POST /v1/<ds>/voronoi_cells         {box?, min_cells, include_members} -> cells
                                    with volumes (and members on request)

Errors are JSON with an `error` field: 400 malformed request, 404
unknown dataset, 413 when a result would exceed the row cap (the cap is
reported in stats).  Responses never depend on request history; all
loaded state is immutable.
"""

from __future__ import annotations

import configparser
import io
import json
import logging
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response

from .dataset import BoundingBox, PointSet, dump_binary, load
from .errors import ConfigError, HypergridError
from .grid import load_grid, sample_box
from .kdtree import Polytope, load_kdtree, query_polytope, subtree_at_depth
from .knn import knn_search
from .voronoi import VoronoiIndex, load_voronoi

SCHEMA_VERSION = 1
DEFAULT_LISTEN = "127.0.0.1:8621"
DEFAULT_ROW_CAP = 1_000_000
BINARY_MEDIA = "application/octet-stream"
LISTEN_ENV = "HYPERGRID_LISTEN"

log = logging.getLogger("hypergrid.service")


@dataclass(frozen=True)
class DatasetSpec:
    """Where one dataset's files live; `voronoi` is coarse-to-fine."""

    name: str
    points: str
    grid: str | None = None
    kdtree: str | None = None
    voronoi: tuple[str, ...] = ()
    row_cap: int | None = None


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8621
    row_cap: int = DEFAULT_ROW_CAP
    datasets: tuple[DatasetSpec, ...] = ()


def _parse_listen(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"listen address {text!r} must be host:port")
    try:
        port_num = int(port)
    except ValueError:
        raise ConfigError(f"listen address {text!r} has a non-numeric port") from None
    if not 0 <= port_num <= 65535:
        raise ConfigError(f"listen port {port_num} out of range")
    return host, port_num


def load_config(path: str) -> ServiceConfig:
    """Parse an INI service config.

    [service] section: listen = host:port, row_cap = N.  One
    [dataset:<name>] section per dataset with keys points (required),
    grid, kdtree, voronoi (comma-separated ladder), row_cap.  Relative
    paths resolve against the config file's directory.
    """
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"{path}: config file not found")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    host, port = _parse_listen(
        parser.get("service", "listen", fallback=DEFAULT_LISTEN))
    row_cap = parser.getint("service", "row_cap", fallback=DEFAULT_ROW_CAP)
    if row_cap < 1:
        raise ConfigError("row_cap must be >= 1")
    datasets = []
    for section in parser.sections():
        if not section.startswith("dataset:"):
            continue
        name = section.split(":", 1)[1].strip()
        if not name or "/" in name:
            raise ConfigError(f"bad dataset name in section [{section}]")
        if not parser.has_option(section, "points"):
            raise ConfigError(f"[{section}] is missing the points file")
        voronoi = tuple(
            resolve(p.strip())
            for p in parser.get(section, "voronoi", fallback="").split(",")
            if p.strip())
        cap = parser.getint(section, "row_cap", fallback=0)
        datasets.append(DatasetSpec(
            name=name,
            points=resolve(parser.get(section, "points")),
            grid=(resolve(parser.get(section, "grid"))
                  if parser.has_option(section, "grid") else None),
            kdtree=(resolve(parser.get(section, "kdtree"))
                    if parser.has_option(section, "kdtree") else None),
            voronoi=voronoi,
            row_cap=cap if cap > 0 else None))
    if not datasets:
        raise ConfigError(f"{path}: no [dataset:<name>] sections")
    return ServiceConfig(host=host, port=port, row_cap=row_cap,
                         datasets=tuple(datasets))


class LoadedDataset:
    """One dataset's points and indexes, loaded eagerly and never mutated."""

    def __init__(self, spec: DatasetSpec, default_cap: int):
        self.name = spec.name
        self.row_cap = spec.row_cap or default_cap
        self.points = self._load(load, spec.points, "points")
        self.grid = (self._load(load_grid, spec.grid, "grid index")
                     if spec.grid else None)
        self.tree = (self._load(load_kdtree, spec.kdtree, "kd index")
                     if spec.kdtree else None)
        ladder = [self._load(load_voronoi, p, "voronoi index")
                  for p in spec.voronoi]
        self.ladder: list[VoronoiIndex] = sorted(ladder, key=lambda v: v.n_cells)
        for index, what in ((self.grid, "grid index"),
                            (self.tree, "kd index"), *[
                                (v, "voronoi index") for v in self.ladder]):
            if index is not None and index_point_count(index) != self.points.n:
                raise ConfigError(
                    f"dataset {self.name}: {what} was built over "
                    f"{index_point_count(index)} points, file has {self.points.n}")

    def _load(self, loader, path, what):
        try:
            return loader(path)
        except FileNotFoundError:
            raise ConfigError(
                f"dataset {self.name}: missing {what} file {path}") from None
        except HypergridError as exc:
            raise ConfigError(f"dataset {self.name}: {exc}") from exc


def index_point_count(index) -> int:
    """Number of points an index was built over."""
    if hasattr(index, "perm"):        # kd-tree
        return index.perm.shape[0]
    if hasattr(index, "n_points"):    # voronoi
        return index.n_points
    return index.n                    # layered grid


# ---------------------------------------------------------------------------
# serialization shared by the endpoints and the golden tests


def _compact_json(payload: dict) -> bytes:
    return json.dumps(payload, separators=(",", ":"), allow_nan=False).encode()


def points_payload(ids, coords, scalar=None) -> list[dict]:
    """The JSON form of a point list: id, coords, optional scalar."""
    out = []
    for row, i in enumerate(ids):
        out.append({
            "id": int(i),
            "coords": [float(c) for c in coords[row]],
            "scalar": None if scalar is None else float(scalar[row]),
        })
    return out


def serialize_points_json(ids, coords, scalar, stats: dict) -> bytes:
    return _compact_json({
        "schema_version": SCHEMA_VERSION,
        "points": points_payload(ids, coords, scalar),
        "stats": stats,
    })


def serialize_points_binary(ids, coords, scalar) -> bytes:
    """Binary column encoding: ids as labels, scalar as targets."""
    buf = io.BytesIO()
    pts = PointSet(np.ascontiguousarray(coords, dtype=np.float64),
                   labels=np.asarray(ids, dtype=np.int64).astype(np.int32),
                   targets=None if scalar is None else np.asarray(scalar, float))
    dump_binary(pts, buf)
    return buf.getvalue()


def serialize_boxes_json(descriptors, stats: dict) -> bytes:
    return _compact_json({
        "schema_version": SCHEMA_VERSION,
        "boxes": [{
            "id": int(d.id), "level": int(d.level), "count": int(d.count),
            "lo": [float(v) for v in d.lo], "hi": [float(v) for v in d.hi],
        } for d in descriptors],
        "stats": stats,
    })


def serialize_edges_json(edges, seed_ids, seed_coords, rung, n_cells,
                         stats: dict) -> bytes:
    return _compact_json({
        "schema_version": SCHEMA_VERSION,
        "level": {"rung": int(rung), "cells": int(n_cells)},
        "edges": [[int(a), int(b)] for a, b in edges],
        "seed_ids": [int(s) for s in seed_ids],
        "seed_coords": [[float(c) for c in row] for row in seed_coords],
        "stats": stats,
    })


def serialize_cells_json(cells, rung, n_cells, stats: dict) -> bytes:
    return _compact_json({
        "schema_version": SCHEMA_VERSION,
        "level": {"rung": int(rung), "cells": int(n_cells)},
        "cells": cells,
        "stats": stats,
    })


# ---------------------------------------------------------------------------
# request parsing


class _BadRequest(Exception):
    pass


def _json_body(raw: bytes) -> dict:
    try:
        body = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _BadRequest(f"malformed JSON body: {exc}") from None
    if not isinstance(body, dict):
        raise _BadRequest("request body must be a JSON object")
    return body


def _floats(value, length, what) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise _BadRequest(f"{what} must be a list of numbers") from None
    if arr.shape != (length,):
        raise _BadRequest(f"{what} must have exactly {length} numbers")
    if not np.isfinite(arr).all():
        raise _BadRequest(f"{what} must be finite")
    return arr


def _parse_box(value, dim) -> BoundingBox:
    if not isinstance(value, dict) or "lo" not in value or "hi" not in value:
        raise _BadRequest("box must be an object with lo and hi lists")
    lo = _floats(value["lo"], dim, "box.lo")
    hi = _floats(value["hi"], dim, "box.hi")
    if (hi <= lo).any():
        raise _BadRequest("box must satisfy lo < hi on every axis")
    return BoundingBox(lo, hi)


def _int_field(body, key, minimum, default=None):
    if key not in body:
        if default is not None:
            return default
        raise _BadRequest(f"missing field {key!r}")
    value = body[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise _BadRequest(f"{key} must be an integer")
    if value < minimum:
        raise _BadRequest(f"{key} must be >= {minimum}")
    return value


def _wants_binary(request: Request) -> bool:
    return BINARY_MEDIA in request.headers.get("accept", "")


# ---------------------------------------------------------------------------
# the app


def _json_response(payload: dict, status: int = 200) -> Response:
    return Response(content=_compact_json(payload), status_code=status,
                    media_type="application/json")


def _error(status: int, message: str, **stats) -> Response:
    return _json_response({
        "schema_version": SCHEMA_VERSION,
        "error": message,
        "stats": {k: int(v) for k, v in stats.items()},
    }, status=status)


def _point_response(request, ids, coords, scalar, stats: dict) -> Response:
    if _wants_binary(request):
        return Response(
            content=serialize_points_binary(ids, coords, scalar),
            media_type=BINARY_MEDIA,
            headers={"X-Examined": str(stats.get("examined", 0)),
                     "X-Returned": str(stats.get("returned", len(ids)))})
    return Response(content=serialize_points_json(ids, coords, scalar, stats),
                    media_type="application/json")


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the ASGI app with every dataset loaded and validated."""
    datasets = {spec.name: LoadedDataset(spec, config.row_cap)
                for spec in config.datasets}
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def time_and_log(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        response.headers["X-Elapsed-Ms"] = f"{elapsed_ms:.3f}"
        log.info("%s %s %d %.3fms", request.method, request.url.path,
                 response.status_code, elapsed_ms)
        return response

    @app.get("/health")
    async def health():
        return _json_response({
            "schema_version": SCHEMA_VERSION,
            "status": "ok",
            "datasets": sorted(datasets),
        })

    def guarded(handler):
        async def endpoint(dataset: str, request: Request):
            ds = datasets.get(dataset)
            if ds is None:
                return _error(404, f"unknown dataset {dataset!r}")
            try:
                body = _json_body(await request.body())
                return handler(ds, body, request)
            except _BadRequest as exc:
                return _error(400, str(exc))
            except ValueError as exc:
                return _error(400, str(exc))
        return endpoint

    def handle_sample(ds, body, request):
        if ds.grid is None:
            raise _BadRequest(f"dataset {ds.name!r} has no grid index")
        box = _parse_box(body.get("box"), 3)
        n = _int_field(body, "n", minimum=1)
        ids, s = sample_box(ds.grid, ds.points, box, n, with_stats=True)
        if ids.shape[0] > ds.row_cap:
            return _error(413, "result exceeds the row cap",
                          cap=ds.row_cap, matched=ids.shape[0])
        scalar = None if ds.points.targets is None else ds.points.targets[ids]
        stats = {"examined": s.examined, "returned": s.returned,
                 "layers_read": s.layers_read}
        return _point_response(request, ids, ds.points.coords[ids], scalar, stats)

    def handle_knn(ds, body, request):
        if ds.tree is None:
            raise _BadRequest(f"dataset {ds.name!r} has no kd index")
        point = _floats(body.get("point"), ds.points.dim, "point")
        k = _int_field(body, "k", minimum=1)
        if k > ds.points.n:
            raise _BadRequest(f"k must be <= {ds.points.n}")
        result, s = knn_search(ds.tree, ds.points, point, k, with_stats=True)
        stats = {"examined": s.points_scanned, "returned": k,
                 "leaves_visited": s.leaves_visited,
                 "frontier_pushes": s.frontier_pushes,
                 "audit_admissions": s.audit_admissions}
        return _point_response(request, result.ids,
                               ds.points.coords[result.ids],
                               result.distances, stats)

    def handle_polytope(ds, body, request):
        if ds.tree is None:
            raise _BadRequest(f"dataset {ds.name!r} has no kd index")
        normals = body.get("normals")
        offsets = body.get("offsets")
        if normals is None or offsets is None:
            raise _BadRequest("polytope needs normals and offsets")
        try:
            poly = Polytope(np.asarray(normals, dtype=np.float64),
                            np.asarray(offsets, dtype=np.float64))
        except (TypeError, ValueError) as exc:
            raise _BadRequest(f"bad polytope: {exc}") from None
        if poly.dim != ds.points.dim:
            raise _BadRequest(f"polytope dimension must be {ds.points.dim}")
        ids, s = query_polytope(ds.tree, ds.points, poly, with_stats=True)
        if ids.shape[0] > ds.row_cap:
            return _error(413, "result exceeds the row cap",
                          cap=ds.row_cap, matched=ids.shape[0])
        scalar = None if ds.points.targets is None else ds.points.targets[ids]
        stats = {"examined": s.tested + s.returned, "returned": s.returned,
                 "tested": s.tested, "leaves_scanned": s.leaves_scanned,
                 "inside_nodes": s.inside_nodes,
                 "nodes_classified": s.nodes_classified}
        return _point_response(request, ids, ds.points.coords[ids], scalar, stats)

    def handle_kdboxes(ds, body, request):
        if ds.tree is None:
            raise _BadRequest(f"dataset {ds.name!r} has no kd index")
        box = _parse_box(body.get("box"), ds.points.dim)
        n = _int_field(body, "n", minimum=1)
        nodes = subtree_at_depth(ds.tree, box, n)
        stats = {"examined": len(nodes), "returned": len(nodes)}
        return Response(content=serialize_boxes_json(nodes, stats),
                        media_type="application/json")

    def handle_delaunay_edges(ds, body, request):
        if not ds.ladder:
            raise _BadRequest(f"dataset {ds.name!r} has no voronoi index")
        min_edges = _int_field(body, "min_edges", minimum=1, default=1)
        box = (None if body.get("box") is None
               else _parse_box(body["box"], ds.ladder[0].dim))
        chosen, rung, edges, total = None, 0, None, 0
        for i, index in enumerate(ds.ladder):
            cand, level_total = _edges_in_box(index, box)
            chosen, rung, edges, total = index, i, cand, level_total
            if cand.shape[0] >= min_edges:
                break
        if edges.shape[0] > ds.row_cap:
            return _error(413, "result exceeds the row cap",
                          cap=ds.row_cap, matched=edges.shape[0])
        involved = np.unique(edges)
        stats = {"examined": total, "returned": edges.shape[0],
                 "cells": chosen.n_cells}
        return Response(
            content=serialize_edges_json(
                edges, involved, chosen.seeds[involved], rung,
                chosen.n_cells, stats),
            media_type="application/json")

    def handle_voronoi_cells(ds, body, request):
        if not ds.ladder:
            raise _BadRequest(f"dataset {ds.name!r} has no voronoi index")
        min_cells = _int_field(body, "min_cells", minimum=1, default=1)
        include_members = body.get("include_members", False)
        if not isinstance(include_members, bool):
            raise _BadRequest("include_members must be a boolean")
        box = (None if body.get("box") is None
               else _parse_box(body["box"], ds.ladder[0].dim))
        chosen, rung, picked = None, 0, None
        for i, index in enumerate(ds.ladder):
            mask = _seeds_in_box(index, box)
            chosen, rung, picked = index, i, np.flatnonzero(mask)
            if picked.shape[0] >= min_cells:
                break
        rows = picked.shape[0]
        if include_members:
            rows += int(chosen.cell_counts()[picked].sum())
        if rows > ds.row_cap:
            return _error(413, "result exceeds the row cap",
                          cap=ds.row_cap, matched=rows)
        counts = chosen.cell_counts()
        cells = []
        for c in picked:
            cell = {
                "cell": int(c),
                "seed": [float(v) for v in chosen.seeds[c]],
                "volume": float(chosen.volumes[c]),
                "volume_se": float(chosen.volume_se[c]),
                "count": int(counts[c]),
            }
            if include_members:
                cell["members"] = [int(m) for m in chosen.members(int(c))]
            cells.append(cell)
        stats = {"examined": chosen.n_cells, "returned": picked.shape[0]}
        return Response(
            content=serialize_cells_json(cells, rung, chosen.n_cells, stats),
            media_type="application/json")

    for name, handler in (("sample", handle_sample), ("knn", handle_knn),
                          ("polytope", handle_polytope),
                          ("kdboxes", handle_kdboxes),
                          ("delaunay_edges", handle_delaunay_edges),
                          ("voronoi_cells", handle_voronoi_cells)):
        app.post(f"/v1/{{dataset}}/{name}")(guarded(handler))

    return app


def _seeds_in_box(index: VoronoiIndex, box: BoundingBox | None) -> np.ndarray:
    if box is None:
        return np.ones(index.n_cells, dtype=bool)
    return ((index.seeds >= box.lo) & (index.seeds < box.hi)).all(axis=1)


def _edges_in_box(index: VoronoiIndex, box: BoundingBox | None):
    """Undirected adjacency edges with both seeds in the box, as (E, 2)
    id pairs sorted by (a, b); also the level's total edge count."""
    src = np.repeat(np.arange(index.n_cells), np.diff(index.adj_indptr))
    dst = index.adj_indices
    keep = src < dst
    src, dst = src[keep], dst[keep]
    total = src.shape[0]
    mask = _seeds_in_box(index, box)
    inside = mask[src] & mask[dst]
    return np.column_stack([src[inside], dst[inside]]), total


# ---------------------------------------------------------------------------
# running


class ServiceHandle:
    """A service running on a background thread."""

    def __init__(self, server, thread, host, port):
        self._server = server
        self._thread = thread
        self.host = host
        self.port = port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        """Signal shutdown and wait for the server thread to exit."""
        self._server.should_exit = True
        self._thread.join(timeout=10)


def resolve_listen(config: ServiceConfig):
    """The configured listen address, unless HYPERGRID_LISTEN overrides it."""
    override = os.environ.get(LISTEN_ENV)
    if override:
        return _parse_listen(override)
    return config.host, config.port


def serve(config: ServiceConfig) -> ServiceHandle:
    """Load every dataset, bind, and serve on a background thread.

    Raises ConfigError for unloadable datasets (naming the file) and
    HypergridError when the address cannot be bound.
    """
    import uvicorn

    host, port = resolve_listen(config)
    app = create_app(config)
    server = uvicorn.Server(uvicorn.Config(
        app, host=host, port=port, log_level="warning", access_log=False))

    def run():
        try:
            server.run()
        except SystemExit:  # bind failure: reported below, not by the thread
            pass

    thread = threading.Thread(target=run, daemon=True,
                              name="hypergrid-service")
    thread.start()
    deadline = time.monotonic() + 15.0
    while time.monotonic() < deadline:
        if server.started:
            if port == 0:  # ephemeral: report the port actually bound
                port = server.servers[0].sockets[0].getsockname()[1]
            return ServiceHandle(server, thread, host, port)
        if not thread.is_alive():
            break
        time.sleep(0.01)
    raise HypergridError(
        f"service failed to start on {host}:{port} (address in use?)")
