"""Triangle meshes: a Wavefront OBJ subset and vertex-normal computation.

The loader understands `v`, `vn`, and `f` records (including `i/t/n` and
`i//n` corner syntax and negative relative indices); polygon faces are
fan-triangulated.  Every other record type is skipped and counted into a
single warning.  Materials, textures, and UVs are out of scope.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

log = logging.getLogger(__name__)

_DEFAULT_NORMAL = (0.0, 1.0, 0.0)


@dataclass
class Mesh:
    """Indexed triangles with optional unit vertex normals and albedo.

    normals is either empty (0, 3), meaning not yet computed, or one unit
    vector per vertex.  albedo defaults to white.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    albedo: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.albedo is None:
            self.albedo = np.ones((self.vertex_count, 3))
        self.albedo = np.asarray(self.albedo, dtype=np.float64).reshape(-1, 3)

        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= self.vertex_count:
                raise ValueError("triangle index out of range")
            same = (self.triangles[:, 0] == self.triangles[:, 1]) & (
                self.triangles[:, 1] == self.triangles[:, 2]
            )
            if same.any():
                raise ValueError("degenerate triangle with three identical indices")
        if self.normals.shape[0] not in (0, self.vertex_count):
            raise ValueError("normals must be empty or one per vertex")
        if self.normals.shape[0]:
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.abs(lengths - 1.0).max() > 1e-6:
                raise ValueError("normals must be unit length within 1e-6")
        if self.albedo.shape[0] != self.vertex_count:
            raise ValueError("albedo must be one RGB row per vertex")

    @property
    def vertex_count(self):
        return self.vertices.shape[0]

    @property
    def triangle_count(self):
        return self.triangles.shape[0]

    @property
    def has_normals(self):
        return self.normals.shape[0] > 0


def _resolve_index(value, count, kind, path, lineno):
    if value == 0:
        raise DataFormatError(f"{path}:{lineno}: OBJ {kind} indices are 1-based, got 0")
    idx = value - 1 if value > 0 else count + value
    if not 0 <= idx < count:
        raise DataFormatError(
            f"{path}:{lineno}: {kind} index {value} out of range (have {count})"
        )
    return idx


def _parse_corner(token, vcount, ncount, path, lineno):
    fields = token.split("/")
    if len(fields) > 3 or not fields[0]:
        raise DataFormatError(f"{path}:{lineno}: malformed face corner {token!r}")
    try:
        vi = _resolve_index(int(fields[0]), vcount, "vertex", path, lineno)
        ni = None
        if len(fields) == 3 and fields[2]:
            ni = _resolve_index(int(fields[2]), ncount, "normal", path, lineno)
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: malformed face corner {token!r}") from None
    return vi, ni


def load_obj(path):
    path = Path(path)
    vertices = []
    file_normals = []
    triangles = []
    corner_normals = []  # (vertex, normal) pairings, kept only if complete
    all_corners_paired = True
    ignored = 0

    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise DataFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: unparseable vertex") from None
            elif tag == "vn":
                if len(parts) < 4:
                    raise DataFormatError(f"{path}:{lineno}: normal needs 3 coordinates")
                try:
                    file_normals.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: unparseable normal") from None
            elif tag == "f":
                corners = [
                    _parse_corner(tok, len(vertices), len(file_normals), path, lineno)
                    for tok in parts[1:]
                ]
                if len(corners) < 3:
                    raise DataFormatError(
                        f"{path}:{lineno}: face needs at least 3 corners, got {len(corners)}"
                    )
                if any(ni is None for _, ni in corners):
                    all_corners_paired = False
                for k in range(1, len(corners) - 1):
                    triangles.append((corners[0][0], corners[k][0], corners[k + 1][0]))
                corner_normals.extend(corners)
            else:
                ignored += 1

    if ignored:
        log.warning("%s: ignored %d unsupported OBJ records", path, ignored)
    if not vertices:
        raise DataFormatError(f"{path}: no vertices")
    if not triangles:
        raise DataFormatError(f"{path}: no faces")

    normals = np.zeros((0, 3))
    if all_corners_paired and file_normals:
        table = np.tile(_DEFAULT_NORMAL, (len(vertices), 1))
        file_arr = np.asarray(file_normals, dtype=np.float64)
        for vi, ni in corner_normals:
            table[vi] = file_arr[ni]
        lengths = np.linalg.norm(table, axis=1)
        normals = np.where(
            lengths[:, None] > 1e-12,
            table / np.maximum(lengths, 1e-300)[:, None],
            _DEFAULT_NORMAL,
        )
    return Mesh(
        vertices=np.asarray(vertices), triangles=np.asarray(triangles), normals=normals
    )


def compute_normals(mesh):
    """New Mesh with area-weighted vertex normals.

    Each triangle adds its unnormalized cross product (twice the area times
    the unit face normal) to its three corners; corners are normalized at
    the end.  Isolated vertices and cancelling sums get (0, 1, 0).
    """
    if mesh.triangle_count == 0:
        raise ValueError("mesh has no triangles")
    v = mesh.vertices
    t = mesh.triangles
    face = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    acc = np.zeros_like(v)
    for corner in range(3):
        np.add.at(acc, t[:, corner], face)
    lengths = np.linalg.norm(acc, axis=1)
    normals = np.where(
        lengths[:, None] > 1e-12,
        acc / np.maximum(lengths, 1e-300)[:, None],
        _DEFAULT_NORMAL,
    )
    return Mesh(
        vertices=v.copy(),
        triangles=t.copy(),
        normals=normals,
        albedo=mesh.albedo.copy(),
    )
