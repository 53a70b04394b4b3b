/**
 * Mesh helpers: area-weighted normals, bounds, and the demo deformation.
 *
 * Normal computation mirrors the Python pipeline exactly (same fallbacks,
 * same accumulation order per triangle), because deformed-frame parity
 * runs through these normals into the motor encoding.
 */

export interface MeshData {
  /** Flat (n * 3) vertex positions. */
  vertices: Float64Array;
  /** Flat (t * 3) vertex indices. */
  triangles: Uint32Array;
}

/**
 * Area-weighted vertex normals: each triangle adds its unnormalized cross
 * product to its three corners.  Isolated vertices and cancelling sums
 * fall back to +y.
 */
export function computeNormals(mesh: MeshData): Float64Array {
  if (mesh.triangles.length === 0) {
    throw new Error("mesh has no triangles");
  }
  const v = mesh.vertices;
  const acc = new Float64Array(v.length);
  for (let t = 0; t < mesh.triangles.length; t += 3) {
    const a = 3 * mesh.triangles[t];
    const b = 3 * mesh.triangles[t + 1];
    const c = 3 * mesh.triangles[t + 2];
    const e1x = v[b] - v[a];
    const e1y = v[b + 1] - v[a + 1];
    const e1z = v[b + 2] - v[a + 2];
    const e2x = v[c] - v[a];
    const e2y = v[c + 1] - v[a + 1];
    const e2z = v[c + 2] - v[a + 2];
    const fx = e1y * e2z - e1z * e2y;
    const fy = e1z * e2x - e1x * e2z;
    const fz = e1x * e2y - e1y * e2x;
    acc[a] += fx; acc[a + 1] += fy; acc[a + 2] += fz;
    acc[b] += fx; acc[b + 1] += fy; acc[b + 2] += fz;
    acc[c] += fx; acc[c + 1] += fy; acc[c + 2] += fz;
  }
  const normals = new Float64Array(v.length);
  for (let i = 0; i < v.length; i += 3) {
    const len = Math.hypot(acc[i], acc[i + 1], acc[i + 2]);
    if (len > 1e-12) {
      normals[i] = acc[i] / len;
      normals[i + 1] = acc[i + 1] / len;
      normals[i + 2] = acc[i + 2] / len;
    } else {
      normals[i] = 0;
      normals[i + 1] = 1;
      normals[i + 2] = 0;
    }
  }
  return normals;
}

/** Diagonal length of the axis-aligned bounding box. */
export function bboxDiagonal(vertices: Float64Array): number {
  if (vertices.length === 0) {
    return 0;
  }
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < vertices.length; i += 3) {
    for (let k = 0; k < 3; k++) {
      lo[k] = Math.min(lo[k], vertices[i + k]);
      hi[k] = Math.max(hi[k], vertices[i + k]);
    }
  }
  return Math.hypot(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
}

export const DEFORM_AMPLITUDE = 0.25;
export const DEFORM_FREQUENCY = 3.0;

/**
 * Sinusoidal vertical displacement driven by a phase in [0, 1].
 *
 * y += amplitude * sin(2*pi*phase) * sin(frequency * (x + z)), so phase 0
 * returns the base vertices unchanged.  The fixture generator reproduces
 * this formula on the Python side for the parity snapshots.
 */
export function deformVertices(
  base: Float64Array,
  phase: number,
  amplitude = DEFORM_AMPLITUDE,
  frequency = DEFORM_FREQUENCY,
): Float64Array {
  const out = new Float64Array(base);
  const gain = amplitude * Math.sin(2 * Math.PI * phase);
  for (let i = 0; i < out.length; i += 3) {
    out[i + 1] += gain * Math.sin(frequency * (out[i] + out[i + 2]));
  }
  return out;
}

/** Mean per-vertex displacement between two flat position arrays. */
export function meanDisplacement(a: Float64Array, b: Float64Array): number {
  if (a.length !== b.length || a.length === 0) {
    throw new Error("position arrays must match and be nonempty");
  }
  let total = 0;
  for (let i = 0; i < a.length; i += 3) {
    total += Math.hypot(b[i] - a[i], b[i + 1] - a[i + 1], b[i + 2] - a[i + 2]);
  }
  return total / (a.length / 3);
}
