/**
 * Optional angular view of the first two columns.
 *
 * Surveys often store a direction (two angles, in degrees) plus a
 * scalar per object.  This mapping re-places each point on its
 * direction ray at a radius growing linearly with the scalar, turning
 * the flat table into the familiar cone picture.  It is purely a
 * client-side transform of the rendered positions; requests still use
 * the data-space view box.
 */

export interface ConeMapping {
  /** Radius at scalar = 0. */
  baseRadius: number;
  /** Radius gained per unit of scalar. */
  radiusPerUnit: number;
}

const DEG = Math.PI / 180;

/**
 * Map rows of (azimuth deg, elevation deg, ...) with a per-point scalar
 * to 3-D positions.  Rows lacking a scalar sit at the base radius.
 */
export function coneProject(
  coords: Float64Array,
  dim: number,
  scalar: Float64Array | null,
  mapping: ConeMapping,
): Float64Array {
  const n = dim === 0 ? 0 : coords.length / dim;
  const out = new Float64Array(n * 3);
  for (let i = 0; i < n; i++) {
    const az = coords[i * dim]! * DEG;
    const el = coords[i * dim + 1]! * DEG;
    const r = mapping.baseRadius + mapping.radiusPerUnit * (scalar === null ? 0 : scalar[i]!);
    out[i * 3] = r * Math.cos(el) * Math.cos(az);
    out[i * 3 + 1] = r * Math.cos(el) * Math.sin(az);
    out[i * 3 + 2] = r * Math.sin(el);
  }
  return out;
}
