/**
 * Per-vertex shading: contract transfer rows against light coefficients.
 *
 * Both sides store 27-wide rows laid out as [coefficient * 3 + channel],
 * so each output channel only ever meets its own channel's columns.  The
 * 1/255 coefficient scale and the default intensity of 255 cancel.
 */

import { SH_BASIS } from "./sh.js";

export const DEFAULT_INTENSITY = 255;
export const COEFF_SCALE = 1 / 255;
export const ROW_WIDTH = SH_BASIS * 3;

/**
 * Shade flat (n * 27) transfer rows with a flat (9 * 3) light, returning
 * flat (n * 3) linear RGB colors.
 */
export function shadeVertices(
  transfer: Float64Array,
  light: Float64Array,
  intensity = DEFAULT_INTENSITY,
): Float64Array {
  if (transfer.length % ROW_WIDTH !== 0) {
    throw new Error(`transfer length ${transfer.length} is not a multiple of ${ROW_WIDTH}`);
  }
  if (light.length !== ROW_WIDTH) {
    throw new Error(`light must have ${ROW_WIDTH} values, got ${light.length}`);
  }
  const count = transfer.length / ROW_WIDTH;
  const gain = intensity * COEFF_SCALE;
  const colors = new Float64Array(count * 3);
  for (let n = 0; n < count; n++) {
    const base = n * ROW_WIDTH;
    for (let k = 0; k < 3; k++) {
      let acc = 0;
      for (let j = 0; j < SH_BASIS; j++) {
        acc += transfer[base + 3 * j + k] * light[3 * j + k];
      }
      colors[n * 3 + k] = acc * gain;
    }
  }
  return colors;
}
