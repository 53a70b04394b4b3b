"""Equirectangular HDR radiance maps: loading, sampling, SH projection.

The single ingest format is Radiance RGBE (`.hdr`) with the `#?RADIANCE`
magic and a `-Y <h> +X <w>` resolution line; both run-length encoded and
flat scanlines decode.  Pixels decode to linear RGB through
(mantissa + 0.5) / 256 * 2^(exponent - 128), with a zero exponent meaning
black.  The legacy pre-RLE repeat markers, other orientations, cube maps,
and XYZE payloads are out of scope.

Maps are equirectangular with row 0 at the pole theta = 0 (the +y axis):
phi in [0, 2pi) runs across the width, theta in [0, pi] down the height.
"""

from dataclasses import dataclass
from math import pi
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .sh import SH_BANDS, LightCoefficients, eval_sh_basis

_MAGIC = b"#?RADIANCE"
_FORMAT = "32-bit_rle_rgbe"


@dataclass
class RadianceMap:
    """Linear RGB radiance on an equirectangular grid, row 0 at the top."""

    pixels: np.ndarray  # (height, width, 3) float64, finite, >= 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("map must be at least 1x1")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def decode_rgbe(rgbe):
    """Shared-exponent bytes (..., 4) to linear RGB (..., 3)."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    mantissa = rgbe[..., :3].astype(np.float64)
    exponent = rgbe[..., 3].astype(np.float64)
    scale = np.where(exponent == 0, 0.0, np.exp2(exponent - 136.0))
    return (mantissa + 0.5) * scale[..., None]


def load_hdr(path):
    path = Path(path)
    data = path.read_bytes()
    offset = data.find(b"\n")
    if offset < 0 or data[:offset].rstrip(b"\r") != _MAGIC:
        raise DataFormatError(f"{path}: not a Radiance file ({_MAGIC.decode()} magic missing)")
    offset += 1

    fmt = None
    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise DataFormatError(f"{path}: header never ends (no blank line)")
        line = data[offset:end].rstrip(b"\r")
        offset = end + 1
        if not line:
            break
        if line.startswith(b"#"):
            continue
        if b"=" in line:
            key, value = line.split(b"=", 1)
            if key.strip() == b"FORMAT":
                fmt = value.strip().decode("ascii", "replace")
    if fmt is None:
        raise DataFormatError(f"{path}: header has no FORMAT line")
    if fmt != _FORMAT:
        raise DataFormatError(f"{path}: unsupported FORMAT {fmt!r}")

    end = data.find(b"\n", offset)
    if end < 0:
        raise DataFormatError(f"{path}: missing resolution line")
    parts = data[offset:end].split()
    offset = end + 1
    if len(parts) != 4 or parts[0] != b"-Y" or parts[2] != b"+X":
        raise DataFormatError(f"{path}: unsupported resolution line {b' '.join(parts)!r}")
    try:
        height, width = int(parts[1]), int(parts[3])
    except ValueError:
        raise DataFormatError(f"{path}: unparseable resolution line") from None
    if height < 1 or width < 1:
        raise DataFormatError(f"{path}: bad dimensions {width}x{height}")

    rows = np.empty((height, width, 4), dtype=np.uint8)
    for row in range(height):
        offset = _read_scanline(data, offset, rows[row], path)
    return RadianceMap(pixels=decode_rgbe(rows))


def _read_scanline(data, offset, out, path):
    width = out.shape[0]
    if (
        8 <= width <= 0x7FFF
        and offset + 4 <= len(data)
        and data[offset] == 2
        and data[offset + 1] == 2
        and (data[offset + 2] << 8 | data[offset + 3]) == width
    ):
        offset += 4
        for channel in range(4):
            pos = 0
            while pos < width:
                if offset >= len(data):
                    raise DataFormatError(f"{path}: truncated scanline at byte offset {offset}")
                count = data[offset]
                offset += 1
                if count > 128:  # run of one repeated byte
                    count -= 128
                    if pos + count > width or offset >= len(data):
                        raise DataFormatError(
                            f"{path}: run overflows scanline at byte offset {offset}"
                        )
                    out[pos : pos + count, channel] = data[offset]
                    offset += 1
                elif count > 0:  # literal span
                    if pos + count > width or offset + count > len(data):
                        raise DataFormatError(
                            f"{path}: literal span overflows scanline at byte offset {offset}"
                        )
                    out[pos : pos + count, channel] = np.frombuffer(
                        data, np.uint8, count, offset
                    )
                    offset += count
                else:
                    raise DataFormatError(f"{path}: zero-length run at byte offset {offset - 1}")
                pos += count
        return offset

    if offset + width * 4 > len(data):
        raise DataFormatError(f"{path}: truncated scanline at byte offset {offset}")
    out[:] = np.frombuffer(data, np.uint8, width * 4, offset).reshape(width, 4)
    return offset + width * 4


def sample_radiance(probe, directions):
    """Bilinear equirectangular lookup for one or many unit directions.

    Longitude wraps, latitude clamps, and a direction within 1e-12 of a
    pole returns the average of the nearest row (azimuth is undefined
    there, so the limit over all azimuths is used).
    """
    dirs = np.asarray(directions, dtype=np.float64)
    single = dirs.ndim == 1
    d = dirs.reshape(-1, 3)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    height, width = probe.height, probe.width
    px = probe.pixels

    theta = np.arccos(np.clip(y, -1.0, 1.0))
    u = (np.arctan2(x, z) + pi) / (2.0 * pi)
    col = u * width - 0.5
    row = theta / pi * height - 0.5

    col0 = np.floor(col)
    row0 = np.floor(row)
    fc = (col - col0)[:, None]
    fr = (row - row0)[:, None]
    c0 = col0.astype(np.int64) % width
    c1 = (c0 + 1) % width
    r0 = np.clip(row0, 0, height - 1).astype(np.int64)
    r1 = np.clip(row0 + 1, 0, height - 1).astype(np.int64)

    top_row = px[r0, c0] * (1.0 - fc) + px[r0, c1] * fc
    bottom_row = px[r1, c0] * (1.0 - fc) + px[r1, c1] * fc
    out = top_row * (1.0 - fr) + bottom_row * fr

    polar = np.sqrt(x * x + z * z) < 1e-12
    if np.any(polar):
        out[polar & (y > 0)] = px[0].mean(axis=0)
        out[polar & (y <= 0)] = px[-1].mean(axis=0)
    return out[0] if single else out.reshape(dirs.shape)


def project_light(probe, samples, bands=SH_BANDS):
    """Monte Carlo SH projection: c = (4pi/N) * sum L(w_i) Y(w_i)."""
    if samples.mode != "sphere":
        raise ValueError("light projection needs full-sphere samples (weight mismatch)")
    if samples.sh_values.shape[1] == bands * bands:
        basis = samples.sh_values
    else:
        basis = eval_sh_basis(samples.directions, bands)
    radiance = sample_radiance(probe, samples.directions)
    values = samples.solid_angle_weight * (basis.T @ radiance)
    return LightCoefficients(values)
