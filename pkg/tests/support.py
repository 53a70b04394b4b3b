"""Shared fixture builders: RGBE encoding and parametric test meshes."""

import math

import numpy as np


def float_to_rgbe(rgb):
    """Inverse of the loader's decode, accurate to half a mantissa step."""
    peak = float(max(rgb))
    if peak < 1e-32:
        return (0, 0, 0, 0)
    _, exponent = math.frexp(peak)
    scale = 256.0 * 2.0 ** (-exponent)
    r, g, b = (min(255, int(v * scale)) for v in rgb)
    return (r, g, b, exponent + 128)


def rgbe_pixels(pixels):
    pixels = np.asarray(pixels, dtype=np.float64)
    out = np.zeros(pixels.shape[:2] + (4,), dtype=np.uint8)
    for r in range(pixels.shape[0]):
        for c in range(pixels.shape[1]):
            out[r, c] = float_to_rgbe(pixels[r, c])
    return out


def _rle_channel(values):
    out = bytearray()
    i = 0
    width = len(values)
    while i < width:
        run = 1
        while i + run < width and run < 127 and values[i + run] == values[i]:
            run += 1
        if run >= 3:
            out.append(128 + run)
            out.append(int(values[i]))
            i += run
        else:
            j = i + 1
            while j < width and j - i < 128:
                ahead = 1
                while j + ahead < width and ahead < 3 and values[j + ahead] == values[j]:
                    ahead += 1
                if ahead >= 3:
                    break
                j += 1
            out.append(j - i)
            out.extend(values[i:j].tobytes())
            i = j
    return bytes(out)


def hdr_bytes(rgbe, rle=False):
    """Serialize (h, w, 4) RGBE bytes as a Radiance file."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    height, width = rgbe.shape[:2]
    head = f"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {height} +X {width}\n".encode()
    body = bytearray()
    if rle and 8 <= width <= 0x7FFF:
        for r in range(height):
            body += bytes((2, 2, width >> 8, width & 0xFF))
            for ch in range(4):
                body += _rle_channel(rgbe[r, :, ch])
    else:
        body += rgbe.tobytes()
    return head + bytes(body)


def write_hdr(path, pixels, rle=False):
    path.write_bytes(hdr_bytes(rgbe_pixels(pixels), rle=rle))
    return path


def texel_directions(height, width):
    """Unit direction at the center of every equirect texel, (h, w, 3)."""
    theta = (np.arange(height) + 0.5) / height * math.pi
    phi = (np.arange(width) + 0.5) / width * 2.0 * math.pi - math.pi
    sin_t = np.sin(theta)[:, None]
    return np.stack(
        (
            sin_t * np.sin(phi)[None, :],
            np.broadcast_to(np.cos(theta)[:, None], (height, width)),
            sin_t * np.cos(phi)[None, :],
        ),
        axis=-1,
    )


def torus_mesh(major_segments, minor_segments, major_radius=1.0, minor_radius=0.35):
    """Closed torus grid: major_segments * minor_segments vertices."""
    i = np.arange(major_segments)
    j = np.arange(minor_segments)
    u = i[:, None] / major_segments * 2.0 * math.pi
    v = j[None, :] / minor_segments * 2.0 * math.pi
    ring = major_radius + minor_radius * np.cos(v)
    x = ring * np.cos(u)
    z = ring * np.sin(u)
    y = minor_radius * np.sin(v) * np.ones_like(u)
    vertices = np.stack((x, y, z), axis=-1).reshape(-1, 3)

    quads = []
    for a in range(major_segments):
        for b in range(minor_segments):
            a1 = (a + 1) % major_segments
            b1 = (b + 1) % minor_segments
            v00 = a * minor_segments + b
            v10 = a1 * minor_segments + b
            v01 = a * minor_segments + b1
            v11 = a1 * minor_segments + b1
            # wound so the cross products face out of the tube
            quads.append((v00, v01, v11))
            quads.append((v00, v11, v10))
    return vertices, np.array(quads, dtype=np.int64)


def box_room_mesh(size=2.0, segments=1):
    """Axis-aligned cube with faces wound to point inward (a closed room).

    Faces are independent segments x segments grids; vertices along shared
    cube edges are duplicated, so every vertex normal is its face's inward
    normal rather than an averaged corner direction.
    """
    s = size / 2.0
    # (corner, u direction, v direction) per face with u x v pointing outward
    faces = [
        ((-s, -s, -s), (1, 0, 0), (0, 0, 1)),  # y = -s
        ((-s, s, -s), (0, 0, 1), (1, 0, 0)),  # y = +s
        ((-s, -s, -s), (0, 0, 1), (0, 1, 0)),  # x = -s
        ((s, -s, -s), (0, 1, 0), (0, 0, 1)),  # x = +s
        ((-s, -s, -s), (0, 1, 0), (1, 0, 0)),  # z = -s
        ((-s, -s, s), (1, 0, 0), (0, 1, 0)),  # z = +s
    ]
    vertices = []
    tris = []
    steps = np.linspace(0.0, size, segments + 1)
    for corner, du, dv in faces:
        corner = np.asarray(corner, dtype=float)
        du = np.asarray(du, dtype=float)
        dv = np.asarray(dv, dtype=float)
        base = len(vertices)
        for a in steps:
            for b in steps:
                vertices.append(corner + a * du + b * dv)
        n = segments + 1
        for a in range(segments):
            for b in range(segments):
                v00 = base + a * n + b
                v01 = base + a * n + b + 1
                v10 = base + (a + 1) * n + b
                v11 = base + (a + 1) * n + b + 1
                # wound (v00, v01, v11) so cross products point inward
                tris.append((v00, v01, v11))
                tris.append((v00, v11, v10))
    return np.asarray(vertices), np.array(tris, dtype=np.int64)


def cube_mesh(size=2.0):
    """Outward unit cube split along alternating diagonals.

    Every face diagonal joins two corners of the inscribed tetrahedron
    {1, 3, 4, 6}, so area-weighted vertex normals come out proportional
    to (+-1, +-1, +-1) at every corner.
    """
    s = size / 2.0
    corners = np.array(
        [
            [-s, -s, -s],
            [s, -s, -s],
            [s, s, -s],
            [-s, s, -s],
            [-s, -s, s],
            [s, -s, s],
            [s, s, s],
            [-s, s, s],
        ]
    )
    quads = [
        (4, 5, 6, 7),  # z = +s
        (3, 2, 1, 0),  # z = -s
        (1, 2, 6, 5),  # x = +s
        (4, 7, 3, 0),  # x = -s
        (3, 7, 6, 2),  # y = +s
        (1, 5, 4, 0),  # y = -s
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return corners, np.array(tris, dtype=np.int64)


def grid_plane_mesh(nx, nz, extent=1.0, y=0.0):
    """Regular grid in the y = const plane with +y-facing winding."""
    xs = np.linspace(-extent, extent, nx)
    zs = np.linspace(-extent, extent, nz)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    vertices = np.stack((gx, np.full_like(gx, y), gz), axis=-1).reshape(-1, 3)
    tris = []
    for a in range(nx - 1):
        for b in range(nz - 1):
            v00 = a * nz + b
            v10 = (a + 1) * nz + b
            v01 = a * nz + b + 1
            v11 = (a + 1) * nz + b + 1
            # CCW seen from +y
            tris.append((v00, v01, v11))
            tris.append((v00, v11, v10))
    return vertices, np.array(tris, dtype=np.int64)


def write_obj(path, vertices, triangles, normals=None):
    lines = []
    for v in vertices:
        lines.append("v %.17g %.17g %.17g" % tuple(v))
    if normals is not None:
        for n in normals:
            lines.append("vn %.17g %.17g %.17g" % tuple(n))
        for t in triangles:
            lines.append("f %d//%d %d//%d %d//%d" % (t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1))
    else:
        for t in triangles:
            lines.append("f %d %d %d" % (t[0] + 1, t[1] + 1, t[2] + 1))
    path.write_text("\n".join(lines) + "\n")
    return path
