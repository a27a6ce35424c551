/**
 * Color scale for density-shaded Voronoi cells.
 *
 * Density is taken as 1 / volume.  Cells are ranked on a logarithmic
 * density axis between the smallest and largest density in view and
 * mapped to a fixed dark-blue-to-yellow ramp.  The mapping is monotone:
 * of two cells, the one with the smaller volume always lands in the
 * same or a higher-density (warmer) bin, never a cooler one.
 */

export const DENSITY_RAMP: readonly string[] = [
  "#0d0887",
  "#5302a3",
  "#8b0aa5",
  "#b83289",
  "#db5c68",
  "#f48849",
  "#febd2a",
  "#f0f921",
];

export interface DensityScale {
  /** Ramp index for a cell volume, 0 = sparsest bin. */
  bin(volume: number): number;
  /** CSS color for a cell volume. */
  color(volume: number): string;
}

/**
 * Build the scale for the set of volumes currently in view.  Volumes
 * must be positive; non-finite and non-positive values clamp to the
 * sparsest bin.
 */
export function densityScale(volumes: number[]): DensityScale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of volumes) {
    if (!(v > 0) || !Number.isFinite(v)) continue;
    const d = Math.log(1 / v);
    if (d < lo) lo = d;
    if (d > hi) hi = d;
  }
  const bins = DENSITY_RAMP.length;
  const span = hi - lo;
  const bin = (volume: number): number => {
    if (!(volume > 0) || !Number.isFinite(volume)) return 0;
    if (span <= 0) return 0;
    const t = (Math.log(1 / volume) - lo) / span;
    return Math.max(0, Math.min(bins - 1, Math.floor(t * bins)));
  };
  return { bin, color: (volume) => DENSITY_RAMP[bin(volume)]! };
}
