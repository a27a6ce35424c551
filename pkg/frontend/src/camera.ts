/**
 * Orbit camera over the data box.
 *
 * The camera circles a target point at a distance, looking inward.  What
 * the service needs from it is the view box: the axis-aligned bound of
 * the view frustum, clipped to the dataset's global box.  Every request
 * the viewer issues is phrased in terms of that box.
 */

import {
  Box3,
  Vec3,
  add,
  boundingBoxOf,
  boxDiagonal,
  boxIntersection,
  normalize,
  scale,
  sub,
} from "./geometry.js";

export interface CameraState {
  /** Point the camera orbits and looks at. */
  target: Vec3;
  /** Distance from the eye to the target, > 0. */
  distance: number;
  /** Orbit angles in radians. */
  yaw: number;
  pitch: number;
  /** Vertical field of view in radians, in (0, pi). */
  fovY: number;
  /** Viewport width / height. */
  aspect: number;
}

export function defaultCamera(globalBox: Box3): CameraState {
  const [cx, cy, cz] = centerOf(globalBox);
  return {
    target: [cx, cy, cz],
    distance: boxDiagonal(globalBox) * 1.5,
    yaw: 0,
    pitch: 0,
    fovY: Math.PI / 3,
    aspect: 16 / 9,
  };
}

function centerOf(box: Box3): Vec3 {
  return [
    (box.lo[0] + box.hi[0]) / 2,
    (box.lo[1] + box.hi[1]) / 2,
    (box.lo[2] + box.hi[2]) / 2,
  ];
}

/** Camera basis in world space: forward toward the target, right, up. */
export function cameraBasis(cam: CameraState): { eye: Vec3; forward: Vec3; right: Vec3; up: Vec3 } {
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  // Eye sits on the orbit sphere; forward points back at the target.
  const offset: Vec3 = [sy * cp, sp, cy * cp];
  const eye = add(cam.target, scale(offset, cam.distance));
  const forward = normalize(sub(cam.target, eye));
  const right: Vec3 = [cy, 0, -sy];
  const up = normalize([
    right[1] * forward[2] - right[2] * forward[1],
    right[2] * forward[0] - right[0] * forward[2],
    right[0] * forward[1] - right[1] * forward[0],
  ]);
  return { eye, forward, right, up };
}

/**
 * Axis-aligned bound of the view frustum, intersected with the global
 * box.  Null when the camera looks entirely away from the data.
 *
 * The far plane sits at twice the orbit distance: the frustum is the
 * shell around the focus point, so moving the camera closer shrinks
 * the box on every axis (geometry past the shell would render at
 * sub-pixel size anyway).  The default camera orbits far enough out
 * that the shell covers the whole dataset.  The mapping is a pure
 * function of the camera state, so returning to an earlier state
 * reproduces its box bit for bit.
 */
export function viewBox(cam: CameraState, globalBox: Box3): Box3 | null {
  const { eye, forward, right, up } = cameraBasis(cam);
  const halfH = Math.tan(cam.fovY / 2);
  const halfW = halfH * cam.aspect;
  const near = Math.max(cam.distance * 1e-3, 1e-6);
  const far = cam.distance * 2;
  const corners: Vec3[] = [];
  for (const t of [near, far]) {
    for (const su of [-1, 1]) {
      for (const sv of [-1, 1]) {
        const ray = add(forward, add(scale(right, su * halfW), scale(up, sv * halfH)));
        corners.push(add(eye, scale(ray, t)));
      }
    }
  }
  return boxIntersection(boundingBoxOf(corners), globalBox);
}

/** New camera moved toward (factor < 1) or away from (factor > 1) the target. */
export function zoomed(cam: CameraState, factor: number): CameraState {
  return { ...cam, distance: cam.distance * factor };
}

/** New camera orbited by the given angle deltas. */
export function orbited(cam: CameraState, dYaw: number, dPitch: number): CameraState {
  const limit = Math.PI / 2 - 1e-3;
  const pitch = Math.min(limit, Math.max(-limit, cam.pitch + dPitch));
  return { ...cam, yaw: cam.yaw + dYaw, pitch };
}

/** New camera with the target shifted in the view plane. */
export function panned(cam: CameraState, dx: number, dy: number): CameraState {
  const { right, up } = cameraBasis(cam);
  const step = cam.distance * 0.002;
  const target = add(cam.target, add(scale(right, dx * step), scale(up, dy * step)));
  return { ...cam, target };
}
