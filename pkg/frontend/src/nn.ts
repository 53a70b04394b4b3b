/**
 * Weight-file parsing and the eval-mode forward pass.
 *
 * Reads the same container the Python trainer writes: an ASCII manifest,
 * an `end` line, then float32 little-endian tensor blobs in manifest
 * order.  Inference folds each batch-norm into a scale/shift pair and
 * runs float64 loops; the Python side accumulates in float32, so parity
 * holds to ~1e-5, not bit-exactly.
 */

import { BLADE_ORDER_HASH } from "./cga.js";

export const WEIGHTS_MAGIC = "ngash-weights v1";
export const BN_EPS = 1e-5;

export interface ModelWeights {
  dims: number[];
  dropout: number[];
  seed: number;
  hiddenCount: number;
  /** Row-major (outDim, inDim) matrices, one per linear layer. */
  weights: Float32Array[];
  biases: Float32Array[];
  bnGamma: Float32Array[];
  bnBeta: Float32Array[];
  bnMean: Float32Array[];
  bnVar: Float32Array[];
  targetMean: Float32Array;
  targetStd: Float32Array;
}

interface TensorSpec {
  name: string;
  size: number;
}

function expectedLayout(dims: number[]): TensorSpec[] {
  const layout: TensorSpec[] = [];
  for (const p of ["gamma", "beta", "mean", "var"]) {
    layout.push({ name: `bn0.${p}`, size: dims[0] });
  }
  const hidden = dims.length - 2;
  for (let l = 1; l <= hidden; l++) {
    layout.push({ name: `layer${l}.weight`, size: dims[l] * dims[l - 1] });
    layout.push({ name: `layer${l}.bias`, size: dims[l] });
    for (const p of ["gamma", "beta", "mean", "var"]) {
      layout.push({ name: `bn${l}.${p}`, size: dims[l] });
    }
  }
  const out = dims[dims.length - 1];
  layout.push({ name: `layer${hidden + 1}.weight`, size: out * dims[dims.length - 2] });
  layout.push({ name: `layer${hidden + 1}.bias`, size: out });
  layout.push({ name: "target.mean", size: out });
  layout.push({ name: "target.std", size: out });
  return layout;
}

function findMarker(bytes: Uint8Array): number {
  // "\nend\n" in ASCII
  const marker = [10, 101, 110, 100, 10];
  outer: for (let i = 0; i + marker.length <= bytes.length; i++) {
    for (let j = 0; j < marker.length; j++) {
      if (bytes[i + j] !== marker[j]) {
        continue outer;
      }
    }
    return i;
  }
  return -1;
}

/** Parse a weights container from raw bytes. */
export function parseWeights(bytes: Uint8Array): ModelWeights {
  const cut = findMarker(bytes);
  if (cut < 0) {
    throw new Error("weights: missing end-of-manifest marker");
  }
  const header = new TextDecoder().decode(bytes.subarray(0, cut)).split("\n");
  if (header[0] !== WEIGHTS_MAGIC) {
    throw new Error("weights: not a weights file (bad magic)");
  }
  const fields = new Map<string, string>();
  const tensorLines: string[] = [];
  for (const line of header.slice(1)) {
    const eq = line.indexOf("=");
    if (eq < 0) {
      throw new Error(`weights: malformed manifest line "${line}"`);
    }
    const key = line.slice(0, eq);
    if (key === "tensor") {
      tensorLines.push(line.slice(eq + 1));
    } else {
      fields.set(key, line.slice(eq + 1));
    }
  }
  for (const key of ["dims", "dropout", "seed", "blade_hash"]) {
    if (!fields.has(key)) {
      throw new Error(`weights: manifest missing "${key}"`);
    }
  }
  const bladeHash = fields.get("blade_hash")!;
  if (bladeHash !== BLADE_ORDER_HASH) {
    throw new Error(
      `weights: blade order hash ${bladeHash} does not match expected ${BLADE_ORDER_HASH}`,
    );
  }
  const dims = fields.get("dims")!.split(",").map(Number);
  if (dims.length < 3 || dims.some((d) => !Number.isInteger(d) || d <= 0)) {
    throw new Error(`weights: bad dims "${fields.get("dims")}"`);
  }
  const dropout = fields.get("dropout")!.split(",").map(Number);
  const seed = Number(fields.get("seed"));

  const layout = expectedLayout(dims);
  if (tensorLines.length !== layout.length) {
    throw new Error(
      `weights: expected ${layout.length} tensors for dims ${dims.join(",")}, ` +
        `manifest lists ${tensorLines.length}`,
    );
  }
  const tensors = new Map<string, Float32Array>();
  let offset = cut + 5;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  for (let t = 0; t < layout.length; t++) {
    const parts = tensorLines[t].split(" ");
    const name = parts[0];
    const size = parts.slice(1).map(Number).reduce((a, b) => a * b, 1);
    if (name !== layout[t].name || size !== layout[t].size) {
      throw new Error(
        `weights: tensor ${t} is "${tensorLines[t]}", expected ` +
          `"${layout[t].name}" with ${layout[t].size} values`,
      );
    }
    if (offset + 4 * size > bytes.byteLength) {
      throw new Error(`weights: blob truncated at tensor "${name}"`);
    }
    const values = new Float32Array(size);
    for (let i = 0; i < size; i++) {
      values[i] = view.getFloat32(offset + 4 * i, true);
    }
    offset += 4 * size;
    tensors.set(name, values);
  }
  if (offset !== bytes.byteLength) {
    throw new Error("weights: trailing bytes after last tensor");
  }

  const hidden = dims.length - 2;
  const weights: Float32Array[] = [];
  const biases: Float32Array[] = [];
  for (let l = 1; l <= hidden + 1; l++) {
    weights.push(tensors.get(`layer${l}.weight`)!);
    biases.push(tensors.get(`layer${l}.bias`)!);
  }
  const bn = (p: string) => {
    const arrays: Float32Array[] = [];
    for (let l = 0; l <= hidden; l++) {
      arrays.push(tensors.get(`bn${l}.${p}`)!);
    }
    return arrays;
  };
  return {
    dims,
    dropout,
    seed,
    hiddenCount: hidden,
    weights,
    biases,
    bnGamma: bn("gamma"),
    bnBeta: bn("beta"),
    bnMean: bn("mean"),
    bnVar: bn("var"),
    targetMean: tensors.get("target.mean")!,
    targetStd: tensors.get("target.std")!,
  };
}

/**
 * Eval-mode forward pass over flat (count * dims[0]) inputs, returning
 * unstandardized rows of width dims[last].  Batch norms apply their
 * running statistics; activations are x * sigmoid(x).
 */
export function forwardEval(w: ModelWeights, input: Float64Array): Float64Array {
  const inDim = w.dims[0];
  if (input.length % inDim !== 0) {
    throw new Error(`input length ${input.length} is not a multiple of ${inDim}`);
  }
  const count = input.length / inDim;

  const scales: Float64Array[] = [];
  const shifts: Float64Array[] = [];
  for (let l = 0; l <= w.hiddenCount; l++) {
    const width = w.bnGamma[l].length;
    const scale = new Float64Array(width);
    const shift = new Float64Array(width);
    for (let i = 0; i < width; i++) {
      scale[i] = w.bnGamma[l][i] / Math.sqrt(w.bnVar[l][i] + BN_EPS);
      shift[i] = w.bnBeta[l][i] - w.bnMean[l][i] * scale[i];
    }
    scales.push(scale);
    shifts.push(shift);
  }

  let h = new Float64Array(input.length);
  for (let n = 0; n < count; n++) {
    for (let i = 0; i < inDim; i++) {
      h[n * inDim + i] = input[n * inDim + i] * scales[0][i] + shifts[0][i];
    }
  }

  for (let l = 0; l < w.hiddenCount; l++) {
    const rows = w.dims[l + 1];
    const cols = w.dims[l];
    const mat = w.weights[l];
    const bias = w.biases[l];
    const scale = scales[l + 1];
    const shift = shifts[l + 1];
    const next = new Float64Array(count * rows);
    for (let n = 0; n < count; n++) {
      for (let o = 0; o < rows; o++) {
        let acc = bias[o];
        const matBase = o * cols;
        const hBase = n * cols;
        for (let i = 0; i < cols; i++) {
          acc += h[hBase + i] * mat[matBase + i];
        }
        const a = acc * scale[o] + shift[o];
        // exp overflow gives Infinity, so the activation saturates to -0
        next[n * rows + o] = a / (1 + Math.exp(-a));
      }
    }
    h = next;
  }

  const outDim = w.dims[w.dims.length - 1];
  const lastCols = w.dims[w.dims.length - 2];
  const mat = w.weights[w.weights.length - 1];
  const bias = w.biases[w.biases.length - 1];
  const out = new Float64Array(count * outDim);
  for (let n = 0; n < count; n++) {
    for (let o = 0; o < outDim; o++) {
      let acc = bias[o];
      const matBase = o * lastCols;
      const hBase = n * lastCols;
      for (let i = 0; i < lastCols; i++) {
        acc += h[hBase + i] * mat[matBase + i];
      }
      out[n * outDim + o] = acc * w.targetStd[o] + w.targetMean[o];
    }
  }
  return out;
}
