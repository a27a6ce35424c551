/**
 * Thin typed client for the query service.
 *
 * One method per endpoint, all POST with a JSON body.  Point sets above
 * the binary threshold are requested as `application/octet-stream` and
 * decoded from the column encoding; everything else is JSON.
 */

import { decodePoints } from "./binary.js";
import { Box3 } from "./geometry.js";

/** Point payloads larger than this are fetched in the binary encoding. */
export const BINARY_THRESHOLD = 10_000;

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export interface PointsResult {
  ids: number[];
  /** Row-major coordinates, ids.length * dim values. */
  coords: Float64Array;
  dim: number;
  scalar: Float64Array | null;
  stats: Record<string, number>;
}

export interface KdBox {
  id: number;
  level: number;
  count: number;
  lo: number[];
  hi: number[];
}

export interface BoxesResult {
  boxes: KdBox[];
  stats: Record<string, number>;
}

export interface EdgesResult {
  level: { rung: number; cells: number };
  edges: [number, number][];
  seedIds: number[];
  seedCoords: number[][];
  stats: Record<string, number>;
}

export interface VoronoiCell {
  cell: number;
  seed: number[];
  volume: number;
  volumeSe: number;
  count: number;
  members?: number[];
}

export interface CellsResult {
  level: { rung: number; cells: number };
  cells: VoronoiCell[];
  stats: Record<string, number>;
}

/** A non-2xx answer, with the parsed error body when there was one. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly stats: Record<string, number> = {},
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

function boxBody(box: Box3): { lo: number[]; hi: number[] } {
  return { lo: [...box.lo], hi: [...box.hi] };
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    readonly dataset: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async post(
    endpoint: string,
    body: unknown,
    accept: string,
  ): Promise<Response> {
    const url = `${this.baseUrl}/v1/${this.dataset}/${endpoint}`;
    const resp = await this.fetchFn(url, {
      method: "POST",
      headers: { "content-type": "application/json", accept },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      let message = `${endpoint} failed with status ${resp.status}`;
      let stats: Record<string, number> = {};
      try {
        const payload = await resp.json();
        if (typeof payload.error === "string") message = payload.error;
        if (payload.stats) stats = payload.stats;
      } catch {
        // keep the status-line message
      }
      throw new ServiceError(resp.status, message, stats);
    }
    return resp;
  }

  async health(): Promise<{ status: string; datasets: string[] }> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`, { method: "GET" });
    if (!resp.ok) throw new ServiceError(resp.status, "health check failed");
    return resp.json();
  }

  /** Density-faithful sample of at least n points in the box. */
  async sample(box: Box3, n: number): Promise<PointsResult> {
    const binary = n > BINARY_THRESHOLD;
    const accept = binary ? "application/octet-stream" : "application/json";
    const resp = await this.post("sample", { box: boxBody(box), n }, accept);
    return binary ? fromBinary(await resp.arrayBuffer()) : fromJson(await resp.json());
  }

  /** kd-boxes at the shallowest depth giving at least n boxes in the box. */
  async kdboxes(box: Box3, n: number): Promise<BoxesResult> {
    const resp = await this.post("kdboxes", { box: boxBody(box), n }, "application/json");
    const payload = await resp.json();
    return { boxes: payload.boxes, stats: payload.stats };
  }

  /** Cell adjacency edges from the coarsest rung with at least minEdges. */
  async delaunayEdges(box: Box3, minEdges: number): Promise<EdgesResult> {
    const resp = await this.post(
      "delaunay_edges",
      { box: boxBody(box), min_edges: minEdges },
      "application/json",
    );
    const payload = await resp.json();
    return {
      level: payload.level,
      edges: payload.edges,
      seedIds: payload.seed_ids,
      seedCoords: payload.seed_coords,
      stats: payload.stats,
    };
  }

  /** Voronoi cells from the coarsest rung with at least minCells. */
  async voronoiCells(box: Box3, minCells: number): Promise<CellsResult> {
    const resp = await this.post(
      "voronoi_cells",
      { box: boxBody(box), min_cells: minCells },
      "application/json",
    );
    const payload = await resp.json();
    return {
      level: payload.level,
      cells: payload.cells.map((c: Record<string, unknown>) => ({
        cell: c.cell,
        seed: c.seed,
        volume: c.volume,
        volumeSe: c.volume_se,
        count: c.count,
      })),
      stats: payload.stats,
    };
  }
}

function fromJson(payload: {
  points: { id: number; coords: number[]; scalar: number | null }[];
  stats: Record<string, number>;
}): PointsResult {
  const n = payload.points.length;
  const dim = n === 0 ? 0 : payload.points[0]!.coords.length;
  const coords = new Float64Array(n * dim);
  const ids = new Array<number>(n);
  let scalar: Float64Array | null = null;
  for (let i = 0; i < n; i++) {
    const p = payload.points[i]!;
    ids[i] = p.id;
    for (let d = 0; d < dim; d++) coords[i * dim + d] = p.coords[d]!;
    if (p.scalar !== null) {
      if (scalar === null) scalar = new Float64Array(n);
      scalar[i] = p.scalar;
    }
  }
  return { ids, coords, dim, scalar, stats: payload.stats };
}

function fromBinary(buffer: ArrayBuffer): PointsResult {
  const cols = decodePoints(buffer);
  return {
    ids: Array.from(cols.ids),
    coords: cols.coords,
    dim: cols.dim,
    scalar: cols.scalar,
    stats: { returned: cols.n },
  };
}
