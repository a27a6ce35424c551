/**
 * Viewer configuration from URL query parameters.
 *
 *   ?service=http://127.0.0.1:8621&dataset=main
 *   &box=-20,-20,-20:20,20,20
 *   &points=100000&boxes=500&cache=8
 *
 * `box` is the dataset's global bound in the three rendered columns and
 * is required; the service does not advertise it.
 */

import { Box3 } from "./geometry.js";
import { DEFAULT_BOX_BUDGET, DEFAULT_POINT_BUDGET } from "./viewer.js";
import { DEFAULT_CACHE_SIZE } from "./cache.js";

export interface ViewerConfig {
  service: string;
  dataset: string;
  globalBox: Box3;
  pointBudget: number;
  boxBudget: number;
  cacheSize: number;
}

export function parseBoxParam(text: string): Box3 {
  const halves = text.split(":");
  if (halves.length !== 2) {
    throw new Error(`box must be lo1,lo2,lo3:hi1,hi2,hi3, got ${text}`);
  }
  const lo = halves[0]!.split(",").map(Number);
  const hi = halves[1]!.split(",").map(Number);
  if (lo.length !== 3 || hi.length !== 3 || [...lo, ...hi].some((v) => !Number.isFinite(v))) {
    throw new Error(`box must hold six finite numbers, got ${text}`);
  }
  for (let d = 0; d < 3; d++) {
    if (lo[d]! >= hi[d]!) throw new Error("box must satisfy lo < hi on every axis");
  }
  return { lo: lo as Box3["lo"], hi: hi as Box3["hi"] };
}

function positiveInt(params: URLSearchParams, key: string, fallback: number): number {
  const raw = params.get(key);
  if (raw === null) return fallback;
  const value = Number(raw);
  if (!Number.isInteger(value) || value < 1) {
    throw new Error(`${key} must be a positive integer, got ${raw}`);
  }
  return value;
}

export function parseViewerConfig(search: string): ViewerConfig {
  const params = new URLSearchParams(search);
  const box = params.get("box");
  if (box === null) throw new Error("missing required query parameter: box");
  return {
    service: params.get("service") ?? "http://127.0.0.1:8621",
    dataset: params.get("dataset") ?? "main",
    globalBox: parseBoxParam(box),
    pointBudget: positiveInt(params, "points", DEFAULT_POINT_BUDGET),
    boxBudget: positiveInt(params, "boxes", DEFAULT_BOX_BUDGET),
    cacheSize: positiveInt(params, "cache", DEFAULT_CACHE_SIZE),
  };
}
