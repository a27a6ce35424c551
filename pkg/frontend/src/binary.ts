/**
 * Decoder for the point-column binary encoding the service answers with
 * when asked for `application/octet-stream`.
 *
 * Layout, all little-endian:
 *   magic "HGPS" | u16 version | u16 flags | u64 n | u32 dim |
 *   dim contiguous float64 columns |
 *   int32 id column (flag bit 1) | float64 scalar column (flag bit 2)
 */

const MAGIC = 0x53504748; // "HGPS" read as a little-endian u32
const HEADER_BYTES = 4 + 2 + 2 + 8 + 4;
const FLAG_IDS = 1;
const FLAG_SCALAR = 2;

export interface PointColumns {
  n: number;
  dim: number;
  /** Row-major coordinates, n * dim values. */
  coords: Float64Array;
  /** Point ids, one per row; empty when the payload carries none. */
  ids: Int32Array;
  /** Per-point scalar (the dataset's target column), or null. */
  scalar: Float64Array | null;
}

export function decodePoints(buffer: ArrayBuffer): PointColumns {
  const view = new DataView(buffer);
  if (buffer.byteLength < HEADER_BYTES) {
    throw new Error(`point payload truncated: ${buffer.byteLength} bytes`);
  }
  if (view.getUint32(0, true) !== MAGIC) {
    throw new Error("point payload does not start with the column magic");
  }
  const version = view.getUint16(4, true);
  if (version !== 1) {
    throw new Error(`unsupported point payload version ${version}`);
  }
  const flags = view.getUint16(6, true);
  const n = Number(view.getBigUint64(8, true));
  const dim = view.getUint32(16, true);

  let expected = HEADER_BYTES + n * dim * 8;
  if (flags & FLAG_IDS) expected += n * 4;
  if (flags & FLAG_SCALAR) expected += n * 8;
  if (buffer.byteLength !== expected) {
    throw new Error(
      `point payload is ${buffer.byteLength} bytes, expected ${expected}`);
  }

  // Columns arrive one coordinate at a time; interleave into rows so a
  // renderer can walk points contiguously.  The 20-byte header leaves
  // the columns 8-misaligned, so they are copied out, not viewed.
  let offset = HEADER_BYTES;
  const coords = new Float64Array(n * dim);
  for (let d = 0; d < dim; d++) {
    const column = new Float64Array(buffer.slice(offset, offset + n * 8));
    for (let i = 0; i < n; i++) coords[i * dim + d] = column[i]!;
    offset += n * 8;
  }

  let ids = new Int32Array(0);
  if (flags & FLAG_IDS) {
    ids = new Int32Array(buffer.slice(offset, offset + n * 4));
    offset += n * 4;
  }
  let scalar: Float64Array | null = null;
  if (flags & FLAG_SCALAR) {
    scalar = new Float64Array(buffer.slice(offset, offset + n * 8));
  }
  return { n, dim, coords, ids, scalar };
}
