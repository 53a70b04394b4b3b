"""Real spherical harmonics: basis evaluation, sampling, and rotation.

Conventions used throughout the package:
  - 3 bands (l = 0, 1, 2), 9 basis functions, ordered (l, m) with
    m = -l..l inside each band.
  - Cartesian closed forms on world coordinates; band 1 is proportional
    to (y, z, x) in that order.
  - Sphere sampling treats +y as the pole, so hemisphere mode covers
    directions with y >= 0.
"""

from dataclasses import dataclass
from math import pi, sqrt
from pathlib import Path

import numpy as np

from .errors import DataFormatError

SH_BANDS = 3

_C0 = 0.5 * sqrt(1.0 / pi)
_C1 = sqrt(3.0 / (4.0 * pi))
_C2A = 0.5 * sqrt(15.0 / pi)  # xy, yz, xz
_C2B = 0.25 * sqrt(5.0 / pi)  # 3z^2 - 1
_C2C = 0.25 * sqrt(15.0 / pi)  # x^2 - y^2


def eval_sh_basis(directions, bands=SH_BANDS):
    """Evaluate the first `bands` bands at unit directions.

    Accepts a single (3,) direction or any (..., 3) batch and returns
    (bands^2,) or (..., bands^2) values accordingly.
    """
    if not 1 <= bands <= SH_BANDS:
        raise ValueError(f"bands must be between 1 and {SH_BANDS}, got {bands}")
    dirs = np.asarray(directions, dtype=np.float64)
    if dirs.shape[-1:] != (3,):
        raise ValueError(f"directions must end in axis of size 3, got {dirs.shape}")
    x = dirs[..., 0]
    y = dirs[..., 1]
    z = dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + (bands * bands,))
    out[..., 0] = _C0
    if bands >= 2:
        out[..., 1] = _C1 * y
        out[..., 2] = _C1 * z
        out[..., 3] = _C1 * x
    if bands >= 3:
        out[..., 4] = _C2A * x * y
        out[..., 5] = _C2A * y * z
        out[..., 6] = _C2B * (3.0 * z * z - 1.0)
        out[..., 7] = _C2A * x * z
        out[..., 8] = _C2C * (x * x - y * y)
    return out


@dataclass
class SampleSet:
    """Stratified unit directions with pre-evaluated basis values."""

    directions: np.ndarray  # (n, 3)
    sh_values: np.ndarray  # (n, bands^2)
    sqrt_count: int
    seed: int
    mode: str  # "sphere" or "hemisphere"

    @property
    def count(self):
        return self.directions.shape[0]

    @property
    def solid_angle_weight(self):
        """Monte Carlo weight per sample for the covered domain."""
        domain = 4.0 * pi if self.mode == "sphere" else 2.0 * pi
        return domain / self.count


def generate_samples(sqrt_count, seed=0, mode="sphere", bands=SH_BANDS):
    """Stratified-jittered directions, sqrt_count^2 cells, one sample each.

    Cell (a, b) of the sqrt_count x sqrt_count grid is jittered in both
    axes; u drives the polar angle (uniform in cos for either domain) and
    v the azimuth.  Deterministic for a fixed (sqrt_count, seed, mode).
    """
    if sqrt_count < 1:
        raise ValueError("sqrt_count must be at least 1")
    if mode not in ("sphere", "hemisphere"):
        raise ValueError(f"mode must be 'sphere' or 'hemisphere', got {mode!r}")
    rng = np.random.default_rng(seed)
    n = sqrt_count * sqrt_count
    jitter = rng.random((n, 2))
    a, b = np.divmod(np.arange(n), sqrt_count)
    u = (a + jitter[:, 0]) / sqrt_count
    v = (b + jitter[:, 1]) / sqrt_count
    cos_theta = 1.0 - 2.0 * u if mode == "sphere" else 1.0 - u
    sin_theta = np.sqrt(np.maximum(0.0, 1.0 - cos_theta * cos_theta))
    phi = 2.0 * pi * v
    directions = np.column_stack(
        (sin_theta * np.cos(phi), cos_theta, sin_theta * np.sin(phi))
    )
    return SampleSet(
        directions=directions,
        sh_values=eval_sh_basis(directions, bands),
        sqrt_count=sqrt_count,
        seed=seed,
        mode=mode,
    )


@dataclass
class LightCoefficients:
    """Per-channel SH coefficients of an environment light, (bands^2, 3)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise ValueError(f"expected (bands^2, 3) values, got {self.values.shape}")
        bands = int(round(sqrt(self.values.shape[0])))
        if bands * bands != self.values.shape[0] or not 1 <= bands <= SH_BANDS:
            raise ValueError(f"row count {self.values.shape[0]} is not a supported bands^2")

    @property
    def bands(self):
        return int(round(sqrt(self.values.shape[0])))


@dataclass
class BandRotation:
    """Block-diagonal SH rotation: one orthogonal matrix per band."""

    matrices: list  # [(1,1), (3,3), (5,5), ...]


def band_rotation_matrices(rotation, bands=SH_BANDS):
    """Per-band rotation matrices for a 3x3 rotation acting on directions.

    Band 1 is the rotation itself re-indexed to the (y, z, x) basis order;
    higher bands follow the recurrence of Ivanic and Ruedenberg.
    """
    rot = np.asarray(rotation, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {rot.shape}")
    if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6) or not np.isclose(
        np.linalg.det(rot), 1.0, atol=1e-6
    ):
        raise ValueError("rotation matrix is not special orthogonal within 1e-6")
    if not 1 <= bands <= SH_BANDS:
        raise ValueError(f"bands must be between 1 and {SH_BANDS}, got {bands}")

    perm = (1, 2, 0)
    band1 = np.array([[rot[perm[i], perm[j]] for j in range(3)] for i in range(3)])
    matrices = [np.ones((1, 1)), band1]
    for l in range(2, bands):
        matrices.append(_next_band(l, band1, matrices[-1]))
    return BandRotation(matrices=matrices[:bands])


def _next_band(l, band1, prev):
    def r1(i, j):
        return band1[i + 1, j + 1]

    def p(i, a, b):
        if abs(b) < l:
            return r1(i, 0) * prev[a + l - 1, b + l - 1]
        if b == l:
            return r1(i, 1) * prev[a + l - 1, 2 * l - 2] - r1(i, -1) * prev[a + l - 1, 0]
        return r1(i, 1) * prev[a + l - 1, 0] + r1(i, -1) * prev[a + l - 1, 2 * l - 2]

    size = 2 * l + 1
    out = np.zeros((size, size))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            denom = (l + n) * (l - n) if abs(n) < l else (2 * l) * (2 * l - 1)
            d0 = 1.0 if m == 0 else 0.0
            u = sqrt((l + m) * (l - m) / denom)
            v = 0.5 * sqrt((1.0 + d0) * (l + abs(m) - 1) * (l + abs(m)) / denom) * (
                1.0 - 2.0 * d0
            )
            w = -0.5 * sqrt((l - abs(m) - 1) * (l - abs(m)) / denom) * (1.0 - d0)

            value = 0.0
            if u != 0.0:
                value += u * p(0, m, n)
            if v != 0.0:
                if m == 0:
                    term = p(1, 1, n) + p(-1, -1, n)
                elif m > 0:
                    d1 = 1.0 if m == 1 else 0.0
                    term = p(1, m - 1, n) * sqrt(1.0 + d1) - p(-1, -(m - 1), n) * (
                        1.0 - d1
                    )
                else:
                    d1 = 1.0 if m == -1 else 0.0
                    term = p(1, m + 1, n) * (1.0 - d1) + p(-1, -(m + 1), n) * sqrt(
                        1.0 + d1
                    )
                value += v * term
            if w != 0.0:
                if m > 0:
                    term = p(1, m + 1, n) + p(-1, -(m + 1), n)
                else:
                    term = p(1, m - 1, n) - p(-1, -(m - 1), n)
                value += w * term
            out[m + l, n + l] = value
    return out


def rotate_sh(light, quaternion):
    """Rotate light coefficients so they represent the rotated environment."""
    rotation = quaternion.to_matrix()
    blocks = band_rotation_matrices(rotation, light.bands)
    values = np.empty_like(light.values)
    for l, mat in enumerate(blocks.matrices):
        lo, hi = l * l, (l + 1) * (l + 1)
        values[lo:hi] = mat @ light.values[lo:hi]
    return LightCoefficients(values)


def save_light_coefficients(path, light, comments=()):
    """Write one row per coefficient, three channels per row, full precision."""
    if light.bands != SH_BANDS:
        raise ValueError("light coefficient files always carry 3 bands")
    lines = [f"# {c}" for c in comments]
    for row in light.values:
        lines.append("%.17g %.17g %.17g" % tuple(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_light_coefficients(path):
    rows = []
    text = Path(path).read_text(encoding="ascii")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 floats, got {len(parts)} fields")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: unparseable float") from None
    if len(rows) != SH_BANDS * SH_BANDS:
        raise DataFormatError(f"{path}: expected 9 coefficient rows, found {len(rows)}")
    return LightCoefficients(np.array(rows))
