/**
 * Browser entry point: fetch the bundle from the serving CLI, build the
 * viewer state, and wire the controls.
 *
 * Left-drag rotates the light, right-drag (or ctrl-drag) orbits the
 * camera, the wheel zooms.  Schema problems surface in the banner with
 * the offending field named.
 */

import { Bundle, parseBundle } from "./bundle.js";
import { quatFromAxisAngle, quatMultiply } from "./cga.js";
import { bboxDiagonal } from "./mesh.js";
import {
  applyDeformation,
  createViewerState,
  rotateLight,
  setActiveLight,
  setIntensity,
  setVelocityThreshold,
  ViewerState,
} from "./state.js";
import { MeshRenderer } from "./viewer.js";

const DRAG_RADIANS_PER_PIXEL = 0.008;

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`page is missing element #${id}`);
  }
  return found as T;
}

function showBanner(message: string): void {
  const banner = element<HTMLDivElement>("banner");
  banner.textContent = message;
  banner.style.display = "block";
}

function hideBanner(): void {
  element<HTMLDivElement>("banner").style.display = "none";
}

async function fetchBundle(url: string): Promise<Bundle> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`bundle fetch failed: HTTP ${response.status}`);
  }
  return parseBundle(await response.json());
}

function wireControls(state: ViewerState, renderer: MeshRenderer, reload: () => void): void {
  const canvas = element<HTMLCanvasElement>("scene");
  const lightSelect = element<HTMLSelectElement>("light-select");
  const intensity = element<HTMLInputElement>("intensity");
  const phase = element<HTMLInputElement>("phase");
  const threshold = element<HTMLInputElement>("threshold");
  const readout = element<HTMLDivElement>("readout");

  const diagonal = bboxDiagonal(state.bundle.mesh.vertices);
  let colorsDirty = true;
  let positionsDirty = true;

  lightSelect.innerHTML = "";
  for (const light of state.bundle.lights) {
    const option = document.createElement("option");
    option.value = light.name;
    option.textContent = light.name;
    lightSelect.appendChild(option);
  }
  lightSelect.value = state.activeLight;
  intensity.value = String(state.intensity);
  phase.value = "0";
  threshold.value = String((100 * state.velocityThreshold) / diagonal);

  lightSelect.addEventListener("change", () => {
    setActiveLight(state, lightSelect.value);
    colorsDirty = true;
  });
  intensity.addEventListener("input", () => {
    setIntensity(state, Number(intensity.value));
    colorsDirty = true;
  });
  phase.addEventListener("input", () => {
    if (applyDeformation(state, Number(phase.value))) {
      colorsDirty = true;
    }
    positionsDirty = true;
  });
  threshold.addEventListener("input", () => {
    setVelocityThreshold(state, (Number(threshold.value) / 100) * diagonal);
  });
  element<HTMLButtonElement>("reload").addEventListener("click", reload);

  let dragging: "light" | "camera" | null = null;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("contextmenu", (event) => event.preventDefault());
  canvas.addEventListener("pointerdown", (event) => {
    dragging = event.button === 2 || event.ctrlKey ? "camera" : "light";
    lastX = event.clientX;
    lastY = event.clientY;
    canvas.setPointerCapture(event.pointerId);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = null;
  });
  canvas.addEventListener("pointermove", (event) => {
    if (!dragging) {
      return;
    }
    const dx = event.clientX - lastX;
    const dy = event.clientY - lastY;
    lastX = event.clientX;
    lastY = event.clientY;
    if (dragging === "camera") {
      state.camera.yaw -= dx * DRAG_RADIANS_PER_PIXEL;
      state.camera.pitch = Math.min(
        1.5,
        Math.max(-1.5, state.camera.pitch + dy * DRAG_RADIANS_PER_PIXEL),
      );
      return;
    }
    if (dx === 0 && dy === 0) {
      return;
    }
    const yaw = quatFromAxisAngle([0, 1, 0], dx * DRAG_RADIANS_PER_PIXEL);
    const pitch = quatFromAxisAngle([1, 0, 0], dy * DRAG_RADIANS_PER_PIXEL);
    rotateLight(state, quatMultiply(pitch, yaw));
    colorsDirty = true;
  });
  canvas.addEventListener("wheel", (event) => {
    event.preventDefault();
    const scale = Math.exp(event.deltaY * 0.001);
    state.camera.distance = Math.min(40, Math.max(0.5, state.camera.distance * scale));
  });

  const frame = () => {
    if (positionsDirty) {
      renderer.uploadPositions(state.vertices);
      positionsDirty = false;
    }
    if (colorsDirty) {
      renderer.uploadColors(state.colors);
      colorsDirty = false;
    }
    renderer.draw(state.camera);
    const q = state.rotation;
    readout.textContent =
      `light quat (${q.w.toFixed(4)}, ${q.x.toFixed(4)}, ${q.y.toFixed(4)}, ${q.z.toFixed(4)})` +
      ` | inference ${state.lastInferenceMs.toFixed(2)} ms` +
      ` | skipped ${state.skippedInferences}` +
      ` | velocity ${state.velocityEstimate.toExponential(2)}`;
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

async function start(): Promise<void> {
  hideBanner();
  try {
    const bundle = await fetchBundle("/bundle");
    const state = createViewerState(bundle);
    const renderer = new MeshRenderer(element<HTMLCanvasElement>("scene"));
    renderer.uploadTopology(bundle.mesh.triangles);
    renderer.uploadPositions(state.vertices);
    renderer.uploadColors(state.colors);
    wireControls(state, renderer, () => {
      window.location.reload();
    });
  } catch (err) {
    showBanner((err as Error).message);
  }
}

start();
