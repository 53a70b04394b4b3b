"""Per-vertex colors from transfer rows and light coefficients.

The color of vertex i in channel k is

    C[i,k] = intensity * coeff_scale * sum_j T[i,3j+k] * L[j,k]

with coeff_scale fixed at 1/255 by default.  The 1/255 factor and the
default intensity of 255 cancel, so physical-scale transfer rows produce
physical colors unless the caller dials intensity away from the default.
Colors are stored unclamped; clamping happens only when writing preview
images.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

DEFAULT_INTENSITY = 255.0
COEFF_SCALE = 1.0 / 255.0


def shade(transfer, light, intensity=DEFAULT_INTENSITY, coeff_scale=COEFF_SCALE):
    """Contract per-vertex transfer rows against the light, one channel at a time."""
    if transfer.bands != light.bands:
        raise ValueError(
            f"transfer has {transfer.bands} bands but light has {light.bands}"
        )
    basis_count = light.values.shape[0]
    per_channel = transfer.rows.reshape(-1, basis_count, 3)
    colors = np.einsum("njk,jk->nk", per_channel, light.values)
    colors *= intensity * coeff_scale
    return colors


@dataclass
class ShadeCache:
    """Colors from the previous frame, valid while both input hashes match."""

    geometry_hash: str = ""
    light_hash: str = ""
    colors: np.ndarray = None


def geometry_hash(mesh):
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(mesh.vertices).tobytes())
    digest.update(np.ascontiguousarray(mesh.normals).tobytes())
    return digest.hexdigest()


def light_hash(light):
    return hashlib.sha256(np.ascontiguousarray(light.values).tobytes()).hexdigest()


def needs_update(cache, mesh, light):
    """True when the cached colors no longer correspond to mesh + light."""
    if cache.colors is None:
        return True
    return cache.geometry_hash != geometry_hash(mesh) or cache.light_hash != light_hash(
        light
    )


def shade_cached(cache, mesh, transfer, light, intensity=DEFAULT_INTENSITY):
    """Reuse cached colors when nothing changed; returns (colors, recomputed)."""
    if not needs_update(cache, mesh, light):
        return cache.colors, False
    colors = shade(transfer, light, intensity)
    cache.geometry_hash = geometry_hash(mesh)
    cache.light_hash = light_hash(light)
    cache.colors = colors
    return colors, True


def save_vertex_colors(path, colors, comments=()):
    colors = np.asarray(colors, dtype=np.float64)
    lines = [f"# {c}" for c in comments]
    for row in colors:
        lines.append("%.17g %.17g %.17g" % tuple(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_vertex_colors(path):
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: unparseable float") from None
    if not rows:
        raise DataFormatError(f"{path}: no color rows")
    return np.asarray(rows)


def render_preview(mesh, colors, size=256):
    """Orthographic painter's-algorithm render looking down -z, (size, size, 3) uint8.

    Triangles are flat-shaded with their mean vertex color and drawn far to
    near; colors are clamped to [0,1] only here.
    """
    colors = np.asarray(colors, dtype=np.float64)
    if colors.shape != (mesh.vertex_count, 3):
        raise ValueError(
            f"need one color per vertex, got {colors.shape} for {mesh.vertex_count} vertices"
        )
    image = np.zeros((size, size, 3), dtype=np.uint8)
    if mesh.triangle_count == 0:
        return image

    vertices = mesh.vertices
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    center = (lo + hi) / 2.0
    half_span = max(float((hi - lo)[:2].max()) / 2.0, 1e-12) * 1.05

    # x right, y up; pixel row 0 is the top of the image
    px = (vertices[:, 0] - center[0]) / half_span * (size / 2.0) + size / 2.0
    py = size / 2.0 - (vertices[:, 1] - center[1]) / half_span * (size / 2.0)

    depth = vertices[:, 2][mesh.triangles].mean(axis=1)
    flat = np.clip(colors[mesh.triangles].mean(axis=1), 0.0, 1.0)
    shades = (flat * 255.0 + 0.5).astype(np.uint8)

    cols = np.arange(size) + 0.5
    for t in np.argsort(depth, kind="stable"):  # far (small z) first
        i0, i1, i2 = mesh.triangles[t]
        xs = np.array([px[i0], px[i1], px[i2]])
        ys = np.array([py[i0], py[i1], py[i2]])
        x_lo = max(int(np.floor(xs.min())), 0)
        x_hi = min(int(np.ceil(xs.max())) + 1, size)
        y_lo = max(int(np.floor(ys.min())), 0)
        y_hi = min(int(np.ceil(ys.max())) + 1, size)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        gx = cols[x_lo:x_hi][None, :]
        gy = cols[y_lo:y_hi][:, None]
        # half-plane sign tests against the three edges
        e0 = (xs[1] - xs[0]) * (gy - ys[0]) - (ys[1] - ys[0]) * (gx - xs[0])
        e1 = (xs[2] - xs[1]) * (gy - ys[1]) - (ys[2] - ys[1]) * (gx - xs[1])
        e2 = (xs[0] - xs[2]) * (gy - ys[2]) - (ys[0] - ys[2]) * (gx - xs[2])
        mask = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
        image[y_lo:y_hi, x_lo:x_hi][mask] = shades[t]
    return image


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("image must be (h, w, 3) uint8")
    height, width = image.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())
