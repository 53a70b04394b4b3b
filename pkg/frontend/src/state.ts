/**
 * Viewer state machine: one mutable state per loaded bundle, advanced by
 * UI events (light drag, light swap, intensity, deformation scrub).
 *
 * All color math runs here on the CPU; the renderer only uploads the
 * resulting vertex colors.  Rapid deformation scrubs skip inference and
 * reuse the previous colors, counting each skip.
 */

import { Bundle } from "./bundle.js";
import { encodeMotors, Quat, QUAT_IDENTITY, quatMultiply, quatNormalize } from "./cga.js";
import { bboxDiagonal, computeNormals, deformVertices, meanDisplacement } from "./mesh.js";
import { forwardEval } from "./nn.js";
import { rotateLightValues } from "./sh.js";
import { DEFAULT_INTENSITY, shadeVertices } from "./shading.js";

/** Fraction of the bounding-box diagonal used as the default skip threshold. */
export const DEFAULT_VELOCITY_FRACTION = 0.01;

export interface CameraOrbit {
  yaw: number;
  pitch: number;
  distance: number;
}

export interface ViewerState {
  bundle: Bundle;
  activeLight: string;
  /** Accumulated light rotation, kept unit-normalized every frame. */
  rotation: Quat;
  intensity: number;
  /** Deformation phase in [0, 1]. */
  phase: number;
  camera: CameraOrbit;
  /** Mean per-vertex displacement of the last deformation frame. */
  velocityEstimate: number;
  /** Displacement above this skips inference for the frame. */
  velocityThreshold: number;
  skippedInferences: number;
  lastInferenceMs: number;
  /** Current (possibly deformed) positions, flat (n * 3). */
  vertices: Float64Array;
  normals: Float64Array;
  /** Transfer rows shading currently uses; bundle rows until re-inferred. */
  transfer: Float64Array;
  rotatedLight: Float64Array;
  colors: Float64Array;
}

function activeLightValues(state: ViewerState): Float64Array {
  const light = state.bundle.lights.find((l) => l.name === state.activeLight);
  if (!light) {
    throw new Error(`light set "${state.activeLight}" is not in the bundle`);
  }
  return light.values;
}

function reshade(state: ViewerState): void {
  state.colors = shadeVertices(state.transfer, state.rotatedLight, state.intensity);
}

/** Fresh state for a parsed bundle; reloading reconstructs this exactly. */
export function createViewerState(bundle: Bundle): ViewerState {
  if (bundle.lights.length === 0) {
    throw new Error("bundle has no light sets");
  }
  const metaIntensity = bundle.metadata["intensity"];
  const state: ViewerState = {
    bundle,
    activeLight: bundle.lights[0].name,
    rotation: { ...QUAT_IDENTITY },
    intensity: typeof metaIntensity === "number" ? metaIntensity : DEFAULT_INTENSITY,
    phase: 0,
    camera: { yaw: 0.6, pitch: 0.4, distance: 3 },
    velocityEstimate: 0,
    velocityThreshold: DEFAULT_VELOCITY_FRACTION * bboxDiagonal(bundle.mesh.vertices),
    skippedInferences: 0,
    lastInferenceMs: 0,
    vertices: new Float64Array(bundle.mesh.vertices),
    normals: new Float64Array(bundle.normals),
    transfer: new Float64Array(bundle.transfer),
    rotatedLight: new Float64Array(bundle.lights[0].values),
    colors: new Float64Array(0),
  };
  reshade(state);
  return state;
}

/**
 * Compose an incremental drag quaternion onto the light rotation and
 * re-shade.  An exact identity increment is a no-op, so idle frames keep
 * colors bit-stable.
 */
export function rotateLight(state: ViewerState, delta: Quat): void {
  if (delta.w === 1 && delta.x === 0 && delta.y === 0 && delta.z === 0) {
    return;
  }
  state.rotation = quatNormalize(quatMultiply(delta, state.rotation));
  state.rotatedLight = rotateLightValues(activeLightValues(state), state.rotation);
  reshade(state);
}

/** Switch light sets, preserving the accumulated rotation. */
export function setActiveLight(state: ViewerState, name: string): void {
  if (!state.bundle.lights.some((l) => l.name === name)) {
    throw new Error(`light set "${name}" is not in the bundle`);
  }
  state.activeLight = name;
  state.rotatedLight = rotateLightValues(activeLightValues(state), state.rotation);
  reshade(state);
}

export function setIntensity(state: ViewerState, intensity: number): void {
  state.intensity = intensity;
  reshade(state);
}

export function setVelocityThreshold(state: ViewerState, threshold: number): void {
  state.velocityThreshold = threshold;
}

/**
 * Move the deformation to a new phase.  When the mean per-vertex
 * displacement stays at or below the velocity threshold, normals are
 * recomputed, vertices re-encoded as motors, the network re-run, and the
 * mesh re-shaded; above it, inference is skipped and stale colors stay.
 *
 * Returns true when inference ran.
 */
export function applyDeformation(state: ViewerState, phase: number): boolean {
  const clamped = Math.min(1, Math.max(0, phase));
  const deformed = deformVertices(state.bundle.mesh.vertices, clamped);
  state.velocityEstimate = meanDisplacement(state.vertices, deformed);
  state.vertices = deformed;
  state.phase = clamped;
  if (state.velocityEstimate > state.velocityThreshold) {
    state.skippedInferences += 1;
    return false;
  }
  const started = performance.now();
  state.normals = computeNormals({ vertices: deformed, triangles: state.bundle.mesh.triangles });
  const motors = encodeMotors(deformed, state.normals);
  state.transfer = forwardEval(state.bundle.weights, motors);
  state.lastInferenceMs = performance.now() - started;
  reshade(state);
  return true;
}
