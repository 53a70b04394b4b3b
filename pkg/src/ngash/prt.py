"""Ground-truth diffuse transfer coefficients with BVH-accelerated visibility.

A vertex's transfer row holds 27 values laid out as index 3*j + k for SH
basis j in 0..8 and color channel k in 0..2:

    t[3j+k] = (albedo_k / pi) * (4 pi / N) * sum_i max(0, n . w_i) * Y_j(w_i)

optionally masked by a visibility term from occlusion rays cast against the
mesh itself.  Sampling must cover the full sphere; the clamped cosine picks
out each vertex's own hemisphere.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import pi
from pathlib import Path

import numpy as np

from . import cga
from .errors import DataFormatError, IntegrityError
from .sh import SH_BANDS

LEAF_SIZE = 4


@dataclass
class TransferMatrix:
    """Per-vertex transfer rows plus the sampling configuration that made them."""

    rows: np.ndarray  # (n, 3 * bands^2)
    bands: int = SH_BANDS
    sample_count: int = 0
    mode: str = "sphere"
    shadowed: bool = False
    source: str = "oracle"

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != 3 * self.bands * self.bands:
            raise ValueError(
                f"rows must be (n, {3 * self.bands * self.bands}) for {self.bands} bands,"
                f" got {self.rows.shape}"
            )
        if self.rows.size and not np.isfinite(self.rows).all():
            raise ValueError("transfer rows must be finite")

    @property
    def vertex_count(self):
        return self.rows.shape[0]


@dataclass
class BVH:
    """Flat binary bounding-box tree; leaves hold up to LEAF_SIZE triangles.

    Triangle vertices are stored in leaf order so a leaf's primitives are one
    contiguous slice; tri_index maps back to the source triangle ids.
    """

    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_v0: np.ndarray
    tri_v1: np.ndarray
    tri_v2: np.ndarray
    tri_index: np.ndarray

    @property
    def node_count_total(self):
        return self.node_lo.shape[0]

    @property
    def triangle_count(self):
        return self.tri_index.shape[0]


def build_bvh(mesh):
    """Median-split tree on the longest centroid axis; deterministic."""
    if mesh.triangle_count == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    corners = mesh.vertices[mesh.triangles]  # (m, 3, 3)
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    centroids = corners.mean(axis=1)

    lo_list, hi_list = [], []
    left_list, right_list = [], []
    start_list, count_list = [], []
    order = []

    def build(idx):
        node = len(lo_list)
        lo_list.append(tri_lo[idx].min(axis=0))
        hi_list.append(tri_hi[idx].max(axis=0))
        left_list.append(-1)
        right_list.append(-1)
        start_list.append(0)
        count_list.append(0)

        extent = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
        if len(idx) <= LEAF_SIZE or extent.max() <= 0.0:
            start_list[node] = len(order)
            count_list[node] = len(idx)
            order.extend(int(i) for i in idx)
            return node
        axis = int(np.argmax(extent))
        ranked = idx[np.argsort(centroids[idx, axis], kind="stable")]
        mid = len(ranked) // 2
        left_list[node] = build(ranked[:mid])
        right_list[node] = build(ranked[mid:])
        return node

    build(np.arange(mesh.triangle_count))
    order = np.asarray(order, dtype=np.int64)
    return BVH(
        node_lo=np.asarray(lo_list),
        node_hi=np.asarray(hi_list),
        node_left=np.asarray(left_list, dtype=np.int64),
        node_right=np.asarray(right_list, dtype=np.int64),
        node_start=np.asarray(start_list, dtype=np.int64),
        node_count=np.asarray(count_list, dtype=np.int64),
        tri_v0=np.ascontiguousarray(corners[order, 0]),
        tri_v1=np.ascontiguousarray(corners[order, 1]),
        tri_v2=np.ascontiguousarray(corners[order, 2]),
        tri_index=order,
    )


def _shear_frame(direction):
    # coordinate permutation and shear constants of the watertight test
    kz = int(np.argmax(np.abs(direction)))
    kx = (kz + 1) % 3
    ky = (kz + 2) % 3
    if direction[kz] < 0.0:
        kx, ky = ky, kx
    sz = 1.0 / direction[kz]
    return kx, ky, kz, direction[kx] * sz, direction[ky] * sz, sz


def _leaf_hit(bvh, start, count, origin, t_min, frame):
    kx, ky, kz, sx, sy, sz = frame
    window = slice(start, start + count)
    a = bvh.tri_v0[window] - origin
    b = bvh.tri_v1[window] - origin
    c = bvh.tri_v2[window] - origin
    ax = a[:, kx] - sx * a[:, kz]
    ay = a[:, ky] - sy * a[:, kz]
    bx = b[:, kx] - sx * b[:, kz]
    by = b[:, ky] - sy * b[:, kz]
    cx = c[:, kx] - sx * c[:, kz]
    cy = c[:, ky] - sy * c[:, kz]
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    det = u + v + w
    inside = (((u >= 0) & (v >= 0) & (w >= 0)) | ((u <= 0) & (v <= 0) & (w <= 0))) & (
        det != 0.0
    )
    if not inside.any():
        return False
    t_scaled = u * (sz * a[:, kz]) + v * (sz * b[:, kz]) + w * (sz * c[:, kz])
    # t = t_scaled / det > t_min, written without the division
    hits = inside & (np.sign(det) * t_scaled > np.abs(det) * t_min)
    return bool(hits.any())


def ray_occluded(bvh, origin, direction, t_min, stats=None):
    """True iff any triangle intersects the ray at parameter t > t_min.

    The per-triangle predicate is a watertight shear test, so rays crossing
    shared edges of a closed mesh never slip through.  When given, stats
    accumulates 'triangle_tests' for instrumentation.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    # clamped reciprocal keeps axis-parallel slab arithmetic finite
    safe = np.where(np.abs(direction) > 1e-300, direction, np.copysign(1e-300, direction))
    inv = 1.0 / safe
    frame = _shear_frame(direction)

    stack = [0]
    while stack:
        node = stack.pop()
        t0 = (bvh.node_lo[node] - origin) * inv
        t1 = (bvh.node_hi[node] - origin) * inv
        near = max(np.minimum(t0, t1).max(), t_min)
        far = np.maximum(t0, t1).min()
        if near > far:
            continue
        count = bvh.node_count[node]
        if count:
            if stats is not None:
                stats["triangle_tests"] = stats.get("triangle_tests", 0) + int(count)
            if _leaf_hit(bvh, bvh.node_start[node], count, origin, t_min, frame):
                return True
        else:
            stack.append(bvh.node_left[node])
            stack.append(bvh.node_right[node])
    return False


def _check_transfer_inputs(mesh, samples):
    if not mesh.has_normals:
        raise ValueError("mesh needs normals; run compute_normals first")
    if samples.mode != "sphere":
        raise ValueError("transfer integration needs full-sphere samples")


def transfer_unshadowed(mesh, samples):
    """Clamped-cosine projection of every vertex, no visibility term."""
    _check_transfer_inputs(mesh, samples)
    cosines = mesh.normals @ samples.directions.T
    np.maximum(cosines, 0.0, out=cosines)
    base = samples.solid_angle_weight * (cosines @ samples.sh_values)  # (n, 9)
    rows = (base[:, :, None] * (mesh.albedo / pi)[:, None, :]).reshape(
        mesh.vertex_count, -1
    )
    return TransferMatrix(
        rows=rows,
        sample_count=samples.count,
        mode=samples.mode,
        shadowed=False,
    )


def worker_count(requested=None):
    """Requested count, else the NGASH_THREADS cap, else all CPUs."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("NGASH_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"NGASH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _shadowed_row(mesh, bvh, samples, vertex, eps):
    normal = mesh.normals[vertex]
    cosines = samples.directions @ normal
    visible = np.zeros(samples.count)
    origin = mesh.vertices[vertex] + eps * normal
    for j in np.nonzero(cosines > 0.0)[0]:
        if not ray_occluded(bvh, origin, samples.directions[j], eps):
            visible[j] = cosines[j]
    base = samples.solid_angle_weight * (visible @ samples.sh_values)
    return np.outer(base, mesh.albedo[vertex] / pi).ravel()


def transfer_shadowed(mesh, bvh, samples, workers=None):
    """Clamped-cosine projection masked by per-vertex occlusion rays.

    Rays start at vertex + eps*normal with eps = 1e-4 of the bounding-box
    diagonal.  Vertices are distributed over a thread pool; each vertex's
    sample loop runs in fixed order, so results do not depend on the worker
    count.
    """
    _check_transfer_inputs(mesh, samples)
    span = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    eps = 1e-4 * max(float(np.linalg.norm(span)), 1e-12)

    count = mesh.vertex_count
    rows = np.empty((count, 3 * SH_BANDS * SH_BANDS))
    workers = worker_count(workers)

    def fill(bounds):
        lo, hi = bounds
        for i in range(lo, hi):
            rows[i] = _shadowed_row(mesh, bvh, samples, i, eps)

    if workers == 1 or count < 2:
        fill((0, count))
    else:
        step = max(1, -(-count // (workers * 4)))
        chunks = [(lo, min(lo + step, count)) for lo in range(0, count, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))

    return TransferMatrix(
        rows=rows,
        sample_count=samples.count,
        mode=samples.mode,
        shadowed=True,
    )


def save_transfer(path, transfer, comments=()):
    """N data lines of 27 floats; `#` header lines carry the metadata."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"# bands={transfer.bands}")
    lines.append(f"# samples={transfer.sample_count}")
    lines.append(f"# mode={transfer.mode}")
    lines.append(f"# shadowed={int(transfer.shadowed)}")
    lines.append(f"# source={transfer.source}")
    lines.append(f"# blade_hash={cga.BLADE_ORDER_HASH}")
    fmt = " ".join(["%.17g"] * transfer.rows.shape[1])
    for row in transfer.rows:
        lines.append(fmt % tuple(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_transfer(path, expected_rows=None):
    path = Path(path)
    meta = {}
    rows = []
    width = None
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and " " not in body.split("=", 1)[0]:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if width is None:
            width = len(parts)
        if len(parts) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: unparseable float") from None

    if not rows:
        raise DataFormatError(f"{path}: no coefficient rows")
    bands = int(meta.get("bands", SH_BANDS))
    if width != 3 * bands * bands:
        raise DataFormatError(
            f"{path}: rows have {width} values, expected {3 * bands * bands} for {bands} bands"
        )
    if "blade_hash" in meta and meta["blade_hash"] != cga.BLADE_ORDER_HASH:
        raise IntegrityError(
            f"{path}: blade-order hash {meta['blade_hash']} does not match this build"
            f" ({cga.BLADE_ORDER_HASH})"
        )
    if expected_rows is not None and len(rows) != expected_rows:
        raise IntegrityError(f"{path}: has {len(rows)} rows, expected {expected_rows}")
    return TransferMatrix(
        rows=np.asarray(rows),
        bands=bands,
        sample_count=int(meta.get("samples", 0)),
        mode=meta.get("mode", "sphere"),
        shadowed=meta.get("shadowed", "0") not in ("0", "false", "False"),
        source=meta.get("source", "oracle"),
    )
