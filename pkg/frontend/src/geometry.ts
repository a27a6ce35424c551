/** Axis-aligned boxes and the little vector algebra the camera needs. */

export type Vec3 = [number, number, number];

export interface Box3 {
  lo: Vec3;
  hi: Vec3;
}

export function vec3(x: number, y: number, z: number): Vec3 {
  return [x, y, z];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function length(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = length(a);
  return n === 0 ? [0, 0, 0] : scale(a, 1 / n);
}

export function boxDiagonal(box: Box3): number {
  return length(sub(box.hi, box.lo));
}

export function boxCenter(box: Box3): Vec3 {
  return scale(add(box.lo, box.hi), 0.5);
}

/** a contains b on every axis (closed bounds). */
export function boxContains(a: Box3, b: Box3): boolean {
  for (let d = 0; d < 3; d++) {
    if (b.lo[d]! < a.lo[d]! || b.hi[d]! > a.hi[d]!) return false;
  }
  return true;
}

export function boxEquals(a: Box3, b: Box3): boolean {
  for (let d = 0; d < 3; d++) {
    if (a.lo[d] !== b.lo[d] || a.hi[d] !== b.hi[d]) return false;
  }
  return true;
}

export function boxesIntersect(a: Box3, b: Box3): boolean {
  for (let d = 0; d < 3; d++) {
    if (a.hi[d]! < b.lo[d]! || b.hi[d]! < a.lo[d]!) return false;
  }
  return true;
}

/** Intersection of two boxes, or null when they are disjoint. */
export function boxIntersection(a: Box3, b: Box3): Box3 | null {
  const lo = vec3(0, 0, 0);
  const hi = vec3(0, 0, 0);
  for (let d = 0; d < 3; d++) {
    lo[d] = Math.max(a.lo[d]!, b.lo[d]!);
    hi[d] = Math.min(a.hi[d]!, b.hi[d]!);
    if (lo[d]! >= hi[d]!) return null;
  }
  return { lo, hi };
}

export function pointInBox(x: number, y: number, z: number, box: Box3): boolean {
  return (
    x >= box.lo[0] && x <= box.hi[0] &&
    y >= box.lo[1] && y <= box.hi[1] &&
    z >= box.lo[2] && z <= box.hi[2]
  );
}

/** Smallest box holding all corners. */
export function boundingBoxOf(corners: Vec3[]): Box3 {
  const lo = vec3(Infinity, Infinity, Infinity);
  const hi = vec3(-Infinity, -Infinity, -Infinity);
  for (const c of corners) {
    for (let d = 0; d < 3; d++) {
      if (c[d]! < lo[d]!) lo[d] = c[d]!;
      if (c[d]! > hi[d]!) hi[d] = c[d]!;
    }
  }
  return { lo, hi };
}
