/**
 * Bundle parsing and validation.
 *
 * The serve endpoint hands us one JSON document holding mesh, transfer
 * rows, light sets, and the weights container.  Every schema failure
 * throws a BundleError naming the offending field, which the viewer
 * surfaces verbatim in its error banner.
 */

import { BLADE_ORDER_HASH } from "./cga.js";
import { MeshData } from "./mesh.js";
import { ModelWeights, parseWeights } from "./nn.js";
import { SH_BASIS } from "./sh.js";
import { ROW_WIDTH } from "./shading.js";

export const BUNDLE_FORMAT = "ngash-bundle";
export const BUNDLE_VERSION = 1;

export class BundleError extends Error {}

export interface LightSet {
  name: string;
  /** Flat (9 * 3) coefficients, [coefficient * 3 + channel]. */
  values: Float64Array;
}

export interface Bundle {
  mesh: MeshData;
  /** Primary-computed normals for the undeformed mesh, flat (n * 3). */
  normals: Float64Array;
  /** Flat (n * 27) transfer rows shipped with the bundle. */
  transfer: Float64Array;
  lights: LightSet[];
  weights: ModelWeights;
  metadata: Record<string, unknown>;
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function requireField(doc: Record<string, unknown>, name: string, label = name): unknown {
  if (!(name in doc)) {
    throw new BundleError(`bundle missing field "${label}"`);
  }
  return doc[name];
}

function flattenMatrix(value: unknown, field: string, width: number): Float64Array {
  if (!Array.isArray(value)) {
    throw new BundleError(`bundle field "${field}" must be an array of rows`);
  }
  const out = new Float64Array(value.length * width);
  for (let r = 0; r < value.length; r++) {
    const row = value[r];
    if (!Array.isArray(row) || row.length !== width) {
      throw new BundleError(`bundle field "${field}" row ${r} must have ${width} numbers`);
    }
    for (let c = 0; c < width; c++) {
      const cell = row[c];
      if (typeof cell !== "number" || !Number.isFinite(cell)) {
        throw new BundleError(`bundle field "${field}" row ${r} holds a non-finite value`);
      }
      out[r * width + c] = cell;
    }
  }
  return out;
}

function decodeBase64(text: string, field: string): Uint8Array {
  let binary: string;
  try {
    binary = atob(text);
  } catch {
    throw new BundleError(`bundle field "${field}" is not valid base64`);
  }
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return bytes;
}

/** Validate a decoded JSON document and lift it into typed arrays. */
export function parseBundle(doc: unknown): Bundle {
  if (!isRecord(doc)) {
    throw new BundleError("bundle must be a JSON object");
  }
  const format = requireField(doc, "format");
  if (format !== BUNDLE_FORMAT) {
    throw new BundleError(`bundle field "format" is ${JSON.stringify(format)}, expected "${BUNDLE_FORMAT}"`);
  }
  const version = requireField(doc, "version");
  if (version !== BUNDLE_VERSION) {
    throw new BundleError(`bundle field "version" is ${JSON.stringify(version)}, expected ${BUNDLE_VERSION}`);
  }
  const bladeHash = requireField(doc, "blade_hash");
  if (bladeHash !== BLADE_ORDER_HASH) {
    throw new BundleError(`bundle field "blade_hash" does not match expected ${BLADE_ORDER_HASH}`);
  }

  const meshDoc = requireField(doc, "mesh");
  if (!isRecord(meshDoc)) {
    throw new BundleError('bundle field "mesh" must be an object');
  }
  const vertices = flattenMatrix(requireField(meshDoc, "vertices", "mesh.vertices"), "mesh.vertices", 3);
  const normals = flattenMatrix(requireField(meshDoc, "normals", "mesh.normals"), "mesh.normals", 3);
  const triangleFloats = flattenMatrix(
    requireField(meshDoc, "triangles", "mesh.triangles"),
    "mesh.triangles",
    3,
  );
  if (normals.length !== vertices.length) {
    throw new BundleError('bundle field "mesh.normals" must match mesh.vertices in length');
  }
  const vertexCount = vertices.length / 3;
  const triangles = new Uint32Array(triangleFloats.length);
  for (let i = 0; i < triangleFloats.length; i++) {
    const idx = triangleFloats[i];
    if (!Number.isInteger(idx) || idx < 0 || idx >= vertexCount) {
      throw new BundleError(`bundle field "mesh.triangles" references vertex ${idx} out of range`);
    }
    triangles[i] = idx;
  }

  const transfer = flattenMatrix(requireField(doc, "transfer"), "transfer", ROW_WIDTH);
  if (transfer.length !== vertexCount * ROW_WIDTH) {
    throw new BundleError(
      `bundle field "transfer" has ${transfer.length / ROW_WIDTH} rows for ${vertexCount} vertices`,
    );
  }

  const lightsDoc = requireField(doc, "lights");
  if (!Array.isArray(lightsDoc) || lightsDoc.length === 0) {
    throw new BundleError('bundle field "lights" must be a nonempty array');
  }
  const lights: LightSet[] = [];
  for (let i = 0; i < lightsDoc.length; i++) {
    const entry = lightsDoc[i];
    if (!isRecord(entry) || typeof entry.name !== "string") {
      throw new BundleError(`bundle field "lights" entry ${i} needs a string "name"`);
    }
    const values = flattenMatrix(entry.values, `lights[${i}].values`, 3);
    if (values.length !== SH_BASIS * 3) {
      throw new BundleError(`bundle field "lights[${i}].values" must be ${SH_BASIS} rows of 3`);
    }
    lights.push({ name: entry.name, values });
  }

  const weightsText = requireField(doc, "weights_base64");
  if (typeof weightsText !== "string") {
    throw new BundleError('bundle field "weights_base64" must be a string');
  }
  let weights: ModelWeights;
  try {
    weights = parseWeights(decodeBase64(weightsText, "weights_base64"));
  } catch (err) {
    if (err instanceof BundleError) {
      throw err;
    }
    throw new BundleError(`bundle field "weights_base64": ${(err as Error).message}`);
  }

  const metadata = isRecord(doc.metadata) ? doc.metadata : {};
  return {
    mesh: { vertices, triangles },
    normals,
    transfer,
    lights,
    weights,
    metadata,
  };
}
