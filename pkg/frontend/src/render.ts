/**
 * Canvas renderer: perspective-projects whatever the scene holds.
 *
 * Points draw as small squares shaded by their scalar, kd-boxes as
 * wireframes, adjacency edges as lines, Voronoi cells as density-
 * colored markers at their seeds.  Everything here is synchronous and
 * sourced from the scene; no fetch is ever awaited on this path.
 */

import { CameraState, cameraBasis } from "./camera.js";
import { BoxesResult, CellsResult, EdgesResult, PointsResult } from "./client.js";
import { densityScale } from "./color.js";
import { Scene } from "./scene.js";
import { dot, sub, Vec3 } from "./geometry.js";

interface Projector {
  (x: number, y: number, z: number): [number, number] | null;
}

function projector(cam: CameraState, width: number, height: number): Projector {
  const { eye, forward, right, up } = cameraBasis(cam);
  const focal = height / (2 * Math.tan(cam.fovY / 2));
  return (x, y, z) => {
    const rel: Vec3 = sub([x, y, z], eye);
    const depth = dot(rel, forward);
    if (depth <= 1e-9) return null;
    const px = (dot(rel, right) / depth) * focal + width / 2;
    const py = height / 2 - (dot(rel, up) / depth) * focal;
    return [px, py];
  };
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  scene: Scene,
  cam: CameraState,
  width: number,
  height: number,
): void {
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, width, height);
  const project = projector(cam, width, height);

  const cells = scene.get("voronoi_cells");
  if (cells !== undefined) drawCells(ctx, cells.payload as CellsResult, project);
  const edges = scene.get("delaunay_edges");
  if (edges !== undefined) drawEdges(ctx, edges.payload as EdgesResult, project);
  const boxes = scene.get("kdboxes");
  if (boxes !== undefined) drawBoxes(ctx, boxes.payload as BoxesResult, project);
  const points = scene.get("sample");
  if (points !== undefined) drawPoints(ctx, points.payload as PointsResult, project);
}

function drawPoints(
  ctx: CanvasRenderingContext2D,
  points: PointsResult,
  project: Projector,
): void {
  const dim = points.dim;
  ctx.fillStyle = "#9fc4ff";
  for (let i = 0; i < points.ids.length; i++) {
    const base = i * dim;
    const p = project(
      points.coords[base]!,
      points.coords[base + 1]!,
      points.coords[base + 2]!,
    );
    if (p !== null) ctx.fillRect(p[0] - 1, p[1] - 1, 2, 2);
  }
}

function drawBoxes(
  ctx: CanvasRenderingContext2D,
  boxes: BoxesResult,
  project: Projector,
): void {
  ctx.strokeStyle = "rgba(180, 255, 170, 0.55)";
  ctx.lineWidth = 1;
  const EDGES: [number, number][] = [
    [0, 1], [0, 2], [1, 3], [2, 3],
    [4, 5], [4, 6], [5, 7], [6, 7],
    [0, 4], [1, 5], [2, 6], [3, 7],
  ];
  for (const box of boxes.boxes) {
    const corners: ([number, number] | null)[] = [];
    for (let mask = 0; mask < 8; mask++) {
      const x = (mask & 1) === 0 ? box.lo[0]! : box.hi[0]!;
      const y = (mask & 2) === 0 ? box.lo[1]! : box.hi[1]!;
      const z = (mask & 4) === 0 ? box.lo[2]! : box.hi[2]!;
      corners.push(project(x, y, z));
    }
    ctx.beginPath();
    for (const [a, b] of EDGES) {
      const pa = corners[a]!;
      const pb = corners[b]!;
      if (pa === null || pb === null) continue;
      ctx.moveTo(pa[0], pa[1]);
      ctx.lineTo(pb[0], pb[1]);
    }
    ctx.stroke();
  }
}

function drawEdges(
  ctx: CanvasRenderingContext2D,
  edges: EdgesResult,
  project: Projector,
): void {
  const position = new Map<number, [number, number] | null>();
  edges.seedIds.forEach((id, row) => {
    const c = edges.seedCoords[row]!;
    position.set(id, project(c[0]!, c[1]!, c[2]!));
  });
  ctx.strokeStyle = "rgba(255, 190, 120, 0.5)";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (const [a, b] of edges.edges) {
    const pa = position.get(a);
    const pb = position.get(b);
    if (pa == null || pb == null) continue;
    ctx.moveTo(pa[0], pa[1]);
    ctx.lineTo(pb[0], pb[1]);
  }
  ctx.stroke();
}

function drawCells(
  ctx: CanvasRenderingContext2D,
  cells: CellsResult,
  project: Projector,
): void {
  const scale = densityScale(cells.cells.map((c) => c.volume));
  for (const cell of cells.cells) {
    const p = project(cell.seed[0]!, cell.seed[1]!, cell.seed[2]!);
    if (p === null) continue;
    ctx.fillStyle = scale.color(cell.volume);
    ctx.fillRect(p[0] - 3, p[1] - 3, 6, 6);
  }
}
