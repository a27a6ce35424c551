/**
 * Cache of the most recent response sets, keyed by (endpoint kind, box,
 * budget) with containment-aware lookup.
 *
 * A stored set answers a query when its box contains the query box and
 * the part of its payload inside the query box still satisfies the
 * requested budget.  Zooming in usually misses (the enclosing sample is
 * too sparse inside the smaller box) while zooming back out hits, so
 * the return leg of a zoom costs no request at all.  Hits are served
 * filtered to the query box and capped at the budget, which is exactly
 * what a fresh request for that box would have returned from the same
 * deterministic service.
 */

import { BoxesResult, CellsResult, EdgesResult, PointsResult } from "./client.js";
import { Box3, boxContains, boxEquals, boxesIntersect, pointInBox } from "./geometry.js";

export type EndpointKind = "sample" | "kdboxes" | "delaunay_edges" | "voronoi_cells";

export type Payload = PointsResult | BoxesResult | EdgesResult | CellsResult;

interface Entry {
  kind: EndpointKind;
  box: Box3;
  budget: number;
  payload: Payload;
}

export const DEFAULT_CACHE_SIZE = 8;

export class GeometryCache {
  private entries: Entry[] = [];

  constructor(readonly capacity: number = DEFAULT_CACHE_SIZE) {
    if (capacity < 1) throw new Error("cache capacity must be >= 1");
  }

  get size(): number {
    return this.entries.length;
  }

  /** Store a response set, evicting the least recently used beyond capacity. */
  insert(kind: EndpointKind, box: Box3, budget: number, payload: Payload): void {
    this.entries = this.entries.filter(
      (e) => !(e.kind === kind && boxEquals(e.box, box) && e.budget === budget),
    );
    this.entries.push({ kind, box: { lo: [...box.lo], hi: [...box.hi] }, budget, payload });
    if (this.entries.length > this.capacity) {
      this.entries.splice(0, this.entries.length - this.capacity);
    }
  }

  /**
   * The cached answer for (kind, box, budget), or null on a miss.
   * A hit refreshes the entry's recency.
   */
  lookup(kind: EndpointKind, box: Box3, budget: number): Payload | null {
    for (let i = this.entries.length - 1; i >= 0; i--) {
      const entry = this.entries[i]!;
      if (entry.kind !== kind || !boxContains(entry.box, box)) continue;
      const exact = boxEquals(entry.box, box) && entry.budget >= budget;
      const filtered = filterPayload(kind, entry.payload, box, budget);
      if (!exact && !satisfies(kind, filtered, budget)) continue;
      this.entries.splice(i, 1);
      this.entries.push(entry);
      return filtered;
    }
    return null;
  }
}

/** Whether the filtered payload still meets the requested budget. */
function satisfies(kind: EndpointKind, payload: Payload, budget: number): boolean {
  switch (kind) {
    case "sample":
      return (payload as PointsResult).ids.length >= budget;
    case "kdboxes":
      return (payload as BoxesResult).boxes.length >= budget;
    case "delaunay_edges":
      return (payload as EdgesResult).edges.length >= budget;
    case "voronoi_cells":
      return (payload as CellsResult).cells.length >= budget;
  }
}

/** The stored payload restricted to the query box, capped at the budget. */
export function filterPayload(
  kind: EndpointKind,
  payload: Payload,
  box: Box3,
  budget: number,
): Payload {
  switch (kind) {
    case "sample":
      return filterPoints(payload as PointsResult, box, budget);
    case "kdboxes": {
      const boxes = (payload as BoxesResult).boxes.filter((b) =>
        boxesIntersect({ lo: b.lo as Box3["lo"], hi: b.hi as Box3["hi"] }, box),
      );
      return { boxes, stats: { returned: boxes.length, cached: 1 } };
    }
    case "delaunay_edges": {
      const source = payload as EdgesResult;
      const inBox = new Set<number>();
      source.seedIds.forEach((id, row) => {
        const c = source.seedCoords[row]!;
        if (pointInBox(c[0]!, c[1]!, c[2]!, box)) inBox.add(id);
      });
      const edges = source.edges.filter(([a, b]) => inBox.has(a) || inBox.has(b));
      return { ...source, edges, stats: { returned: edges.length, cached: 1 } };
    }
    case "voronoi_cells": {
      const source = payload as CellsResult;
      const cells = source.cells.filter((c) =>
        pointInBox(c.seed[0]!, c.seed[1]!, c.seed[2]!, box),
      );
      return { ...source, cells, stats: { returned: cells.length, cached: 1 } };
    }
  }
}

/** Points inside the box in stored (coarse-layer-first) order, first `budget`. */
function filterPoints(source: PointsResult, box: Box3, budget: number): PointsResult {
  const rows: number[] = [];
  const dim = source.dim;
  for (let i = 0; i < source.ids.length && rows.length < budget; i++) {
    const base = i * dim;
    if (pointInBox(source.coords[base]!, source.coords[base + 1]!, source.coords[base + 2]!, box)) {
      rows.push(i);
    }
  }
  const coords = new Float64Array(rows.length * dim);
  const ids = new Array<number>(rows.length);
  const scalar = source.scalar === null ? null : new Float64Array(rows.length);
  rows.forEach((row, out) => {
    ids[out] = source.ids[row]!;
    coords.set(source.coords.subarray(row * dim, (row + 1) * dim), out * dim);
    if (scalar !== null) scalar[out] = source.scalar![row]!;
  });
  return { ids, coords, dim, scalar, stats: { returned: rows.length, cached: 1 } };
}
