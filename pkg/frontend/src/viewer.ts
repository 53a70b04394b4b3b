/**
 * Minimal WebGL2 renderer: one indexed triangle mesh with per-vertex
 * colors.  All shading happens on the CPU in state.ts; the shaders below
 * only transform positions and interpolate the uploaded colors, so what
 * lands on screen is exactly what the parity tests check.
 */

import { CameraOrbit } from "./state.js";

const VERTEX_SHADER = `#version 300 es
in vec3 aPosition;
in vec3 aColor;
uniform mat4 uMvp;
out vec3 vColor;
void main() {
  vColor = aColor;
  gl_Position = uMvp * vec4(aPosition, 1.0);
}`;

const FRAGMENT_SHADER = `#version 300 es
precision highp float;
in vec3 vColor;
out vec4 outColor;
void main() {
  outColor = vec4(clamp(vColor, 0.0, 1.0), 1.0);
}`;

function compile(gl: WebGL2RenderingContext, kind: number, source: string): WebGLShader {
  const shader = gl.createShader(kind);
  if (!shader) {
    throw new Error("could not allocate shader");
  }
  gl.shaderSource(shader, source);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

function multiply(a: Float32Array, b: Float32Array): Float32Array {
  const out = new Float32Array(16);
  for (let c = 0; c < 4; c++) {
    for (let r = 0; r < 4; r++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) {
        acc += a[4 * k + r] * b[4 * c + k];
      }
      out[4 * c + r] = acc;
    }
  }
  return out;
}

/** Column-major view matrix orbiting the origin. */
function orbitView(camera: CameraOrbit): Float32Array {
  const cp = Math.cos(camera.pitch);
  const sp = Math.sin(camera.pitch);
  const cy = Math.cos(camera.yaw);
  const sy = Math.sin(camera.yaw);
  const eye = [camera.distance * cp * sy, camera.distance * sp, camera.distance * cp * cy];

  const fwd = [-eye[0], -eye[1], -eye[2]];
  const fl = Math.hypot(fwd[0], fwd[1], fwd[2]);
  fwd[0] /= fl; fwd[1] /= fl; fwd[2] /= fl;
  let rx = fwd[1] * 0 - fwd[2] * 1;
  let ry = fwd[2] * 0 - fwd[0] * 0;
  let rz = fwd[0] * 1 - fwd[1] * 0;
  const rl = Math.hypot(rx, ry, rz) || 1;
  rx /= rl; ry /= rl; rz /= rl;
  const ux = ry * fwd[2] - rz * fwd[1];
  const uy = rz * fwd[0] - rx * fwd[2];
  const uz = rx * fwd[1] - ry * fwd[0];

  const out = new Float32Array(16);
  out[0] = rx; out[4] = ry; out[8] = rz;
  out[1] = ux; out[5] = uy; out[9] = uz;
  out[2] = -fwd[0]; out[6] = -fwd[1]; out[10] = -fwd[2];
  out[12] = -(rx * eye[0] + ry * eye[1] + rz * eye[2]);
  out[13] = -(ux * eye[0] + uy * eye[1] + uz * eye[2]);
  out[14] = fwd[0] * eye[0] + fwd[1] * eye[1] + fwd[2] * eye[2];
  out[15] = 1;
  return out;
}

export class MeshRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private mvpLocation: WebGLUniformLocation;
  private positionBuffer: WebGLBuffer;
  private colorBuffer: WebGLBuffer;
  private indexBuffer: WebGLBuffer;
  private indexCount = 0;

  constructor(canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2");
    if (!gl) {
      throw new Error("WebGL2 is not available in this browser");
    }
    this.gl = gl;
    const program = gl.createProgram();
    if (!program) {
      throw new Error("could not allocate shader program");
    }
    gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERTEX_SHADER));
    gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, FRAGMENT_SHADER));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
    }
    this.program = program;
    const mvp = gl.getUniformLocation(program, "uMvp");
    if (!mvp) {
      throw new Error("uMvp uniform missing");
    }
    this.mvpLocation = mvp;
    this.positionBuffer = gl.createBuffer()!;
    this.colorBuffer = gl.createBuffer()!;
    this.indexBuffer = gl.createBuffer()!;
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.08, 0.09, 0.11, 1);
  }

  uploadTopology(triangles: Uint32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuffer);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, triangles, gl.STATIC_DRAW);
    this.indexCount = triangles.length;
  }

  uploadPositions(vertices: Float64Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, new Float32Array(vertices), gl.DYNAMIC_DRAW);
  }

  uploadColors(colors: Float64Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, new Float32Array(colors), gl.DYNAMIC_DRAW);
  }

  draw(camera: CameraOrbit): void {
    const gl = this.gl;
    const canvas = gl.canvas as HTMLCanvasElement;
    gl.viewport(0, 0, canvas.width, canvas.height);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.indexCount === 0) {
      return;
    }
    gl.useProgram(this.program);

    const projection = perspective(Math.PI / 4, canvas.width / canvas.height, 0.05, 100);
    gl.uniformMatrix4fv(this.mvpLocation, false, multiply(projection, orbitView(camera)));

    const positionLoc = gl.getAttribLocation(this.program, "aPosition");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.enableVertexAttribArray(positionLoc);
    gl.vertexAttribPointer(positionLoc, 3, gl.FLOAT, false, 0, 0);

    const colorLoc = gl.getAttribLocation(this.program, "aColor");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.enableVertexAttribArray(colorLoc);
    gl.vertexAttribPointer(colorLoc, 3, gl.FLOAT, false, 0, 0);

    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuffer);
    gl.drawElements(gl.TRIANGLES, this.indexCount, gl.UNSIGNED_INT, 0);
  }
}
