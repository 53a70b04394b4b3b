/**
 * Spherical-harmonic light rotation for 3-band RGB coefficient sets.
 *
 * Same construction as the Python side: band 1 is the rotation matrix
 * re-indexed to the (y, z, x) basis order, higher bands follow the
 * Ivanic-Ruedenberg recurrence.  Lights are flat (9*3) arrays laid out
 * as [coefficient * 3 + channel].
 */

import { Quat, quatToMatrix } from "./cga.js";

export const SH_BANDS = 3;
export const SH_BASIS = SH_BANDS * SH_BANDS;

function checkSpecialOrthogonal(rot: Float64Array): void {
  let maxDev = 0;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) {
        dot += rot[3 * i + k] * rot[3 * j + k];
      }
      maxDev = Math.max(maxDev, Math.abs(dot - (i === j ? 1 : 0)));
    }
  }
  const det =
    rot[0] * (rot[4] * rot[8] - rot[5] * rot[7]) -
    rot[1] * (rot[3] * rot[8] - rot[5] * rot[6]) +
    rot[2] * (rot[3] * rot[7] - rot[4] * rot[6]);
  if (maxDev > 1e-6 || Math.abs(det - 1) > 1e-6) {
    throw new Error("rotation matrix is not special orthogonal within 1e-6");
  }
}

function nextBand(l: number, band1: Float64Array, prev: Float64Array): Float64Array {
  const prevSize = 2 * l - 1;
  const r1 = (i: number, j: number) => band1[3 * (i + 1) + (j + 1)];
  const p = (i: number, a: number, b: number): number => {
    if (Math.abs(b) < l) {
      return r1(i, 0) * prev[prevSize * (a + l - 1) + (b + l - 1)];
    }
    if (b === l) {
      return (
        r1(i, 1) * prev[prevSize * (a + l - 1) + (2 * l - 2)] -
        r1(i, -1) * prev[prevSize * (a + l - 1)]
      );
    }
    return (
      r1(i, 1) * prev[prevSize * (a + l - 1)] +
      r1(i, -1) * prev[prevSize * (a + l - 1) + (2 * l - 2)]
    );
  };

  const size = 2 * l + 1;
  const out = new Float64Array(size * size);
  for (let m = -l; m <= l; m++) {
    for (let n = -l; n <= l; n++) {
      const denom = Math.abs(n) < l ? (l + n) * (l - n) : 2 * l * (2 * l - 1);
      const d0 = m === 0 ? 1 : 0;
      const u = Math.sqrt(((l + m) * (l - m)) / denom);
      const v =
        0.5 *
        Math.sqrt(((1 + d0) * (l + Math.abs(m) - 1) * (l + Math.abs(m))) / denom) *
        (1 - 2 * d0);
      const w = -0.5 * Math.sqrt(((l - Math.abs(m) - 1) * (l - Math.abs(m))) / denom) * (1 - d0);

      let value = 0;
      if (u !== 0) {
        value += u * p(0, m, n);
      }
      if (v !== 0) {
        let term: number;
        if (m === 0) {
          term = p(1, 1, n) + p(-1, -1, n);
        } else if (m > 0) {
          const d1 = m === 1 ? 1 : 0;
          term = p(1, m - 1, n) * Math.sqrt(1 + d1) - p(-1, -(m - 1), n) * (1 - d1);
        } else {
          const d1 = m === -1 ? 1 : 0;
          term = p(1, m + 1, n) * (1 - d1) + p(-1, -(m + 1), n) * Math.sqrt(1 + d1);
        }
        value += v * term;
      }
      if (w !== 0) {
        const term = m > 0 ? p(1, m + 1, n) + p(-1, -(m + 1), n) : p(1, m - 1, n) - p(-1, -(m - 1), n);
        value += w * term;
      }
      out[size * (m + l) + (n + l)] = value;
    }
  }
  return out;
}

/** Per-band rotation blocks for a row-major 3x3 rotation matrix. */
export function bandRotationMatrices(rot: Float64Array, bands = SH_BANDS): Float64Array[] {
  if (rot.length !== 9) {
    throw new Error("rotation must be a flat 3x3 matrix");
  }
  checkSpecialOrthogonal(rot);
  if (bands < 1 || bands > SH_BANDS) {
    throw new Error(`bands must be between 1 and ${SH_BANDS}, got ${bands}`);
  }
  const perm = [1, 2, 0];
  const band1 = new Float64Array(9);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      band1[3 * i + j] = rot[3 * perm[i] + perm[j]];
    }
  }
  const matrices: Float64Array[] = [new Float64Array([1]), band1];
  for (let l = 2; l < bands; l++) {
    matrices.push(nextBand(l, band1, matrices[matrices.length - 1]));
  }
  return matrices.slice(0, bands);
}

/**
 * Rotate flat (9*3) light coefficients so they represent the environment
 * rotated by the unit quaternion.
 */
export function rotateLightValues(values: Float64Array, q: Quat): Float64Array {
  if (values.length !== SH_BASIS * 3) {
    throw new Error(`light must have ${SH_BASIS * 3} values, got ${values.length}`);
  }
  const blocks = bandRotationMatrices(quatToMatrix(q));
  const out = new Float64Array(values.length);
  for (let l = 0; l < blocks.length; l++) {
    const mat = blocks[l];
    const size = 2 * l + 1;
    const lo = l * l;
    for (let k = 0; k < 3; k++) {
      for (let r = 0; r < size; r++) {
        let acc = 0;
        for (let c = 0; c < size; c++) {
          acc += mat[size * r + c] * values[(lo + c) * 3 + k];
        }
        out[(lo + r) * 3 + k] = acc;
      }
    }
  }
  return out;
}
