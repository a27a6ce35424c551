/**
 * Deterministic in-memory stand-in for the query service, speaking the
 * same wire shapes through an injectable fetch.
 *
 * Points live in a fixed global box with a fixed rank order; /sample
 * answers with the in-box points in rank order capped at n, exactly
 * like reading coarse layers first.  /kdboxes subdivides the global
 * box into octants until at least n boxes intersect the query box.
 * The cells/edges endpoints serve a two-rung ladder of regular grids.
 */

import { Box3, boxesIntersect, pointInBox, vec3 } from "../src/geometry.js";
import { FetchLike } from "../src/client.js";

export interface MockPoint {
  id: number;
  x: number;
  y: number;
  z: number;
  scalar: number;
}

/** Deterministic point cloud: a fixed linear-congruential scatter. */
export function makePoints(n: number, box: Box3): MockPoint[] {
  let state = 0x2545f491;
  const next = () => {
    state = (Math.imul(state, 1103515245) + 12345) & 0x7fffffff;
    return state / 0x80000000;
  };
  const points: MockPoint[] = [];
  for (let i = 0; i < n; i++) {
    const x = box.lo[0] + (box.hi[0] - box.lo[0]) * next();
    const y = box.lo[1] + (box.hi[1] - box.lo[1]) * next();
    const z = box.lo[2] + (box.hi[2] - box.lo[2]) * next();
    points.push({ id: i, x, y, z, scalar: x * x + y * y + z * z });
  }
  return points;
}

/** The binary column encoding of a point list, as the service sends it. */
export function encodePoints(points: MockPoint[]): ArrayBuffer {
  const n = points.length;
  const dim = 3;
  const flags = 1 | 2; // ids and scalar columns present
  const bytes = 20 + n * dim * 8 + n * 4 + n * 8;
  const buffer = new ArrayBuffer(bytes);
  const view = new DataView(buffer);
  view.setUint32(0, 0x53504748, true); // "HGPS"
  view.setUint16(4, 1, true);
  view.setUint16(6, flags, true);
  view.setBigUint64(8, BigInt(n), true);
  view.setUint32(16, dim, true);
  let offset = 20;
  for (const pick of [
    (p: MockPoint) => p.x,
    (p: MockPoint) => p.y,
    (p: MockPoint) => p.z,
  ]) {
    for (const p of points) {
      view.setFloat64(offset, pick(p), true);
      offset += 8;
    }
  }
  for (const p of points) {
    view.setInt32(offset, p.id, true);
    offset += 4;
  }
  for (const p of points) {
    view.setFloat64(offset, p.scalar, true);
    offset += 8;
  }
  return buffer;
}

function parseBox(body: { box: { lo: number[]; hi: number[] } }): Box3 {
  return {
    lo: body.box.lo as Box3["lo"],
    hi: body.box.hi as Box3["hi"],
  };
}

interface CellSpec {
  cell: number;
  seed: [number, number, number];
  volume: number;
  count: number;
}

function gridCells(globalBox: Box3, perAxis: number): CellSpec[] {
  const cells: CellSpec[] = [];
  const ext = vec3(0, 0, 0);
  for (let d = 0; d < 3; d++) ext[d] = (globalBox.hi[d]! - globalBox.lo[d]!) / perAxis;
  let id = 0;
  for (let i = 0; i < perAxis; i++) {
    for (let j = 0; j < perAxis; j++) {
      for (let k = 0; k < perAxis; k++) {
        const seed: [number, number, number] = [
          globalBox.lo[0] + (i + 0.5) * ext[0]!,
          globalBox.lo[1] + (j + 0.5) * ext[1]!,
          globalBox.lo[2] + (k + 0.5) * ext[2]!,
        ];
        // Volumes vary per cell so density binning has a range.
        const volume = ext[0]! * ext[1]! * ext[2]! * (1 + ((id * 7) % 13) / 4);
        cells.push({ cell: id, seed, volume, count: 10 + (id % 5) });
        id++;
      }
    }
  }
  return cells;
}

export interface MockCall {
  endpoint: string;
  body: Record<string, unknown>;
  accept: string;
}

export class MockService {
  calls: MockCall[] = [];

  constructor(
    readonly points: MockPoint[],
    readonly globalBox: Box3,
  ) {}

  /** Fresh /sample answer for a box: in-box points in rank order, first n. */
  samplePoints(box: Box3, n: number): MockPoint[] {
    const hits: MockPoint[] = [];
    for (const p of this.points) {
      if (pointInBox(p.x, p.y, p.z, box)) {
        hits.push(p);
        if (hits.length === n) break;
      }
    }
    return hits;
  }

  /** Octant subdivision until at least n boxes intersect the query box. */
  kdBoxes(box: Box3, n: number): { id: number; level: number; count: number; lo: number[]; hi: number[] }[] {
    for (let level = 0; level <= 8; level++) {
      const perAxis = 2 ** level;
      const out: { id: number; level: number; count: number; lo: number[]; hi: number[] }[] = [];
      let id = 0;
      for (let i = 0; i < perAxis; i++) {
        for (let j = 0; j < perAxis; j++) {
          for (let k = 0; k < perAxis; k++) {
            const lo = [
              this.globalBox.lo[0] + (i / perAxis) * (this.globalBox.hi[0] - this.globalBox.lo[0]),
              this.globalBox.lo[1] + (j / perAxis) * (this.globalBox.hi[1] - this.globalBox.lo[1]),
              this.globalBox.lo[2] + (k / perAxis) * (this.globalBox.hi[2] - this.globalBox.lo[2]),
            ];
            const hi = [
              this.globalBox.lo[0] + ((i + 1) / perAxis) * (this.globalBox.hi[0] - this.globalBox.lo[0]),
              this.globalBox.lo[1] + ((j + 1) / perAxis) * (this.globalBox.hi[1] - this.globalBox.lo[1]),
              this.globalBox.lo[2] + ((k + 1) / perAxis) * (this.globalBox.hi[2] - this.globalBox.lo[2]),
            ];
            if (boxesIntersect({ lo: lo as Box3["lo"], hi: hi as Box3["hi"] }, box)) {
              out.push({ id: id, level, count: 1, lo, hi });
            }
            id++;
          }
        }
      }
      if (out.length >= n) return out;
    }
    throw new Error("mock subdivision exhausted");
  }

  fetch: FetchLike = async (url, init) => {
    const headers = (init.headers ?? {}) as Record<string, string>;
    const accept = headers.accept ?? "application/json";
    if (url.endsWith("/health")) {
      return jsonResponse({ schema_version: 1, status: "ok", datasets: ["mock"] });
    }
    const endpoint = url.split("/").pop()!;
    const body = JSON.parse(init.body as string);
    this.calls.push({ endpoint, body, accept });

    switch (endpoint) {
      case "sample": {
        const picked = this.samplePoints(parseBox(body), body.n);
        const stats = { examined: picked.length, returned: picked.length, layers_read: 1 };
        if (accept.includes("application/octet-stream")) {
          return new Response(encodePoints(picked), {
            status: 200,
            headers: { "content-type": "application/octet-stream" },
          });
        }
        return jsonResponse({
          schema_version: 1,
          points: picked.map((p) => ({ id: p.id, coords: [p.x, p.y, p.z], scalar: p.scalar })),
          stats,
        });
      }
      case "kdboxes": {
        const boxes = this.kdBoxes(parseBox(body), body.n);
        return jsonResponse({
          schema_version: 1,
          boxes,
          stats: { examined: boxes.length, returned: boxes.length },
        });
      }
      case "delaunay_edges": {
        const minEdges = body.min_edges ?? 1;
        for (const perAxis of [2, 4]) {
          const cells = gridCells(this.globalBox, perAxis);
          const edges: [number, number][] = [];
          for (const a of cells) {
            for (const b of cells) {
              if (a.cell < b.cell && neighbours(a, b, perAxis)) edges.push([a.cell, b.cell]);
            }
          }
          if (edges.length >= minEdges || perAxis === 4) {
            return jsonResponse({
              schema_version: 1,
              level: { rung: perAxis === 2 ? 0 : 1, cells: cells.length },
              edges,
              seed_ids: cells.map((c) => c.cell),
              seed_coords: cells.map((c) => c.seed),
              stats: { examined: edges.length, returned: edges.length, cells: cells.length },
            });
          }
        }
        throw new Error("unreachable");
      }
      case "voronoi_cells": {
        const minCells = body.min_cells ?? 1;
        for (const perAxis of [2, 4]) {
          const cells = gridCells(this.globalBox, perAxis);
          const queryBox = body.box === undefined || body.box === null ? null : parseBox(body);
          const picked = queryBox === null
            ? cells
            : cells.filter((c) => pointInBox(c.seed[0], c.seed[1], c.seed[2], queryBox));
          if (picked.length >= minCells || perAxis === 4) {
            return jsonResponse({
              schema_version: 1,
              level: { rung: perAxis === 2 ? 0 : 1, cells: cells.length },
              cells: picked.map((c) => ({
                cell: c.cell,
                seed: c.seed,
                volume: c.volume,
                volume_se: c.volume * 0.01,
                count: c.count,
              })),
              stats: { examined: cells.length, returned: picked.length },
            });
          }
        }
        throw new Error("unreachable");
      }
      default:
        return jsonResponse({ schema_version: 1, error: `no such endpoint ${endpoint}` }, 404);
    }
  };
}

function neighbours(a: CellSpec, b: CellSpec, perAxis: number): boolean {
  const ai = decompose(a.cell, perAxis);
  const bi = decompose(b.cell, perAxis);
  const diff = Math.abs(ai[0] - bi[0]) + Math.abs(ai[1] - bi[1]) + Math.abs(ai[2] - bi[2]);
  return diff === 1;
}

function decompose(cell: number, perAxis: number): [number, number, number] {
  const k = cell % perAxis;
  const j = Math.floor(cell / perAxis) % perAxis;
  const i = Math.floor(cell / (perAxis * perAxis));
  return [i, j, k];
}

export function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** A promise with its resolvers exposed, for hanging and releasing fetches. */
export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (error: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}
