/**
 * Quaternions and the conformal-algebra motor encoding.
 *
 * Mirrors the Python pipeline exactly: a vertex (position, normal) becomes
 * a 32-wide multivector, the geometric product of a translator to the
 * position with a rotor aligning +y to the normal.  The network consumes
 * these rows, so any drift here breaks cross-component parity.
 */

export const MOTOR_WIDTH = 32;

/** Fingerprint of the 32-blade basis order shared with the Python side. */
export const BLADE_ORDER_HASH = "730be83cfff76a01";

export interface Quat {
  w: number;
  x: number;
  y: number;
  z: number;
}

export const QUAT_IDENTITY: Quat = { w: 1, x: 0, y: 0, z: 0 };

export function quatMultiply(a: Quat, b: Quat): Quat {
  return {
    w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
    x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
    y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
    z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
  };
}

export function quatConjugate(q: Quat): Quat {
  return { w: q.w, x: -q.x, y: -q.y, z: -q.z };
}

export function quatNorm(q: Quat): number {
  return Math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
}

export function quatNormalize(q: Quat): Quat {
  const n = quatNorm(q);
  if (n < 1e-300) {
    throw new Error("cannot normalize a zero quaternion");
  }
  return { w: q.w / n, x: q.x / n, y: q.y / n, z: q.z / n };
}

export function quatFromAxisAngle(axis: [number, number, number], angle: number): Quat {
  const len = Math.hypot(axis[0], axis[1], axis[2]);
  if (len < 1e-300) {
    throw new Error("axis must be nonzero");
  }
  const half = angle / 2;
  const s = Math.sin(half) / len;
  return { w: Math.cos(half), x: axis[0] * s, y: axis[1] * s, z: axis[2] * s };
}

/** Row-major 3x3 rotation matrix of a unit quaternion. */
export function quatToMatrix(q: Quat): Float64Array {
  const { w, x, y, z } = q;
  return new Float64Array([
    1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
    2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
    2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
  ]);
}

// Geometric-product support of translator (7 blades) x rotor (4 blades):
// TARGETS[t][r] is the output blade index, SIGNS[t][r] its sign.  Derived
// from the grade-ordered 32-blade basis; only 12 output slots are touched.
const TARGETS = [
  [0, 6, 7, 10],
  [8, 11, 13, 26],
  [11, 8, 26, 13],
  [13, 26, 8, 11],
  [9, 12, 14, 27],
  [12, 9, 27, 14],
  [14, 27, 9, 12],
];
const SIGNS = [
  [1, 1, 1, 1],
  [1, 1, 1, 1],
  [1, -1, -1, 1],
  [1, 1, -1, -1],
  [1, 1, 1, 1],
  [1, -1, -1, 1],
  [1, 1, -1, -1],
];

/**
 * Encode vertices as motors, one 32-wide row per vertex.
 *
 * positions and normals are flat (n*3) arrays.  Degenerate normals fall
 * back to +y; a normal opposite +y uses the 180-degree rotation about x.
 */
export function encodeMotors(positions: Float64Array, normals: Float64Array): Float64Array {
  if (positions.length !== normals.length || positions.length % 3 !== 0) {
    throw new Error("positions and normals must both be flat (n*3) arrays");
  }
  const count = positions.length / 3;
  const out = new Float64Array(count * MOTOR_WIDTH);
  const rotor = new Float64Array(4);
  const trans = new Float64Array(7);

  for (let i = 0; i < count; i++) {
    const px = positions[3 * i];
    const py = positions[3 * i + 1];
    const pz = positions[3 * i + 2];
    let nx = normals[3 * i];
    let ny = normals[3 * i + 1];
    let nz = normals[3 * i + 2];

    const len = Math.hypot(nx, ny, nz);
    if (len < 1e-12) {
      nx = 0; ny = 1; nz = 0;
    } else {
      nx /= len; ny /= len; nz /= len;
    }

    let qw = 1 + ny;
    let qx = nz;
    let qy = 0;
    let qz = -nx;
    if (qw < 1e-13) {
      qw = 0; qx = 1; qy = 0; qz = 0;
    }
    const qn = Math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    qw /= qn; qx /= qn; qy /= qn; qz /= qn;

    rotor[0] = qw;
    rotor[1] = -qz;
    rotor[2] = qy;
    rotor[3] = -qx;

    trans[0] = 1;
    trans[1] = -0.5 * px;
    trans[2] = -0.5 * py;
    trans[3] = -0.5 * pz;
    trans[4] = -0.5 * px;
    trans[5] = -0.5 * py;
    trans[6] = -0.5 * pz;

    const base = i * MOTOR_WIDTH;
    for (let t = 0; t < 7; t++) {
      for (let r = 0; r < 4; r++) {
        out[base + TARGETS[t][r]] += SIGNS[t][r] * trans[t] * rotor[r];
      }
    }
  }
  return out;
}
