"""Conformal geometric algebra kernel for Cl(4,1).

Multivectors are dense rows of 32 float64 coefficients over the generator
set (e1, e2, e3, ep, em) with metric signature (+1, +1, +1, +1, -1).
Blades are ordered grade-major and lexicographically inside each grade:
scalar, 5 vectors, 10 bivectors, 10 trivectors, 5 quadvectors, then the
pseudoscalar.  The null directions are ni = em + ep (infinity) and
no = (em - ep) / 2 (origin), so a Euclidean point p embeds as
p + 0.5*|p|^2*ni + no.

BLADE_ORDER_HASH fingerprints the blade layout, metric, and product tables.
Files that persist multivector rows embed it so a reader can refuse
coefficients produced by an incompatible layout.
"""

import hashlib
import math

import numpy as np

BASIS_NAMES = ("e1", "e2", "e3", "ep", "em")
METRIC = (1.0, 1.0, 1.0, 1.0, -1.0)


def _sorted_masks():
    def key(mask):
        bits = [i for i in range(5) if mask >> i & 1]
        return (len(bits), bits)

    return tuple(sorted(range(32), key=key))


BLADES = _sorted_masks()
BLADE_INDEX = {mask: i for i, mask in enumerate(BLADES)}
GRADES = np.array([bin(mask).count("1") for mask in BLADES], dtype=np.int64)
BLADE_NAMES = tuple(
    "1" if mask == 0 else "^".join(BASIS_NAMES[i] for i in range(5) if mask >> i & 1)
    for mask in BLADES
)

# Sign of reordering the concatenation of two canonically sorted blades:
# each generator of `a` above the lowest must hop over the lower generators
# of `b`, and every hop flips the sign.
def _reorder_sign(a, b):
    a >>= 1
    swaps = 0
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1.0 if swaps & 1 else 1.0


def _build_tables():
    sign = np.zeros((32, 32))
    target = np.zeros((32, 32), dtype=np.int64)
    for i, a in enumerate(BLADES):
        for j, b in enumerate(BLADES):
            s = _reorder_sign(a, b)
            for k in range(5):
                if a >> k & 1 and b >> k & 1:
                    s *= METRIC[k]
            sign[i, j] = s
            target[i, j] = BLADE_INDEX[a ^ b]
    return sign, target


SIGN_TABLE, TARGET_TABLE = _build_tables()

# Dense product tensor: (a * b)[k] = sum_ij a[i] b[j] PRODUCT_TENSOR[i, j, k].
PRODUCT_TENSOR = np.zeros((32, 32, 32))
PRODUCT_TENSOR[
    np.repeat(np.arange(32), 32), np.tile(np.arange(32), 32), TARGET_TABLE.ravel()
] = SIGN_TABLE.ravel()

# Reversion flips sign on grades 2 and 3 (generally when g*(g-1)/2 is odd).
REVERSE_SIGNS = np.where((GRADES * (GRADES - 1) // 2) % 2 == 0, 1.0, -1.0)


def _layout_hash():
    h = hashlib.sha256()
    h.update(",".join(str(mask) for mask in BLADES).encode("ascii"))
    h.update(b"|")
    h.update(",".join("%+g" % m for m in METRIC).encode("ascii"))
    h.update(b"|")
    h.update(TARGET_TABLE.tobytes())
    h.update(SIGN_TABLE.tobytes())
    return h.hexdigest()[:16]


BLADE_ORDER_HASH = _layout_hash()

_IDX_E = tuple(BLADE_INDEX[1 << axis] for axis in range(3))
_IDX_EP = BLADE_INDEX[1 << 3]
_IDX_EM = BLADE_INDEX[1 << 4]
_IDX_E_EP = tuple(BLADE_INDEX[(1 << axis) | (1 << 3)] for axis in range(3))
_IDX_E_EM = tuple(BLADE_INDEX[(1 << axis) | (1 << 4)] for axis in range(3))
_IDX_E12 = BLADE_INDEX[0b00011]
_IDX_E13 = BLADE_INDEX[0b00101]
_IDX_E23 = BLADE_INDEX[0b00110]


class Multivector32:
    """Dense Cl(4,1) element: 32 float64 coefficients in blade order."""

    __slots__ = ("values",)

    def __init__(self, values=None):
        if values is None:
            self.values = np.zeros(32)
        else:
            arr = np.array(values, dtype=np.float64)
            if arr.shape != (32,):
                raise ValueError(f"expected 32 coefficients, got shape {arr.shape}")
            self.values = arr

    def __mul__(self, other):
        return geometric_product(self, other)

    def __add__(self, other):
        return Multivector32(self.values + other.values)

    def __sub__(self, other):
        return Multivector32(self.values - other.values)

    def __neg__(self):
        return Multivector32(-self.values)

    def __repr__(self):
        terms = [
            f"{c:+.6g}*{BLADE_NAMES[i]}"
            for i, c in enumerate(self.values)
            if abs(c) > 1e-12
        ]
        return "Multivector32(" + (" ".join(terms) if terms else "0") + ")"


def scalar(value):
    mv = Multivector32()
    mv.values[0] = value
    return mv


def basis_vector(name):
    try:
        idx = BASIS_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown basis vector {name!r}") from None
    mv = Multivector32()
    mv.values[BLADE_INDEX[1 << idx]] = 1.0
    return mv


def euclidean_vector(v):
    v = np.asarray(v, dtype=np.float64)
    mv = Multivector32()
    mv.values[1:4] = v
    return mv


def geometric_product(a, b):
    return Multivector32(np.einsum("i,j,ijk->k", a.values, b.values, PRODUCT_TENSOR))


def reverse(a):
    return Multivector32(a.values * REVERSE_SIGNS)


def apply_versor(versor, x):
    """Sandwich product versor * x * ~versor."""
    return geometric_product(geometric_product(versor, x), reverse(versor))


def conformal_point(p):
    """Embed a Euclidean point as a null vector p + 0.5|p|^2 ni + no."""
    p = np.asarray(p, dtype=np.float64)
    half_sq = 0.5 * float(p @ p)
    mv = Multivector32()
    mv.values[1:4] = p
    mv.values[_IDX_EP] = half_sq - 0.5
    mv.values[_IDX_EM] = half_sq + 0.5
    return mv


def point_to_euclidean(mv):
    """Invert conformal_point, tolerating an overall scale on the point."""
    weight = mv.values[_IDX_EM] - mv.values[_IDX_EP]
    if abs(weight) < 1e-12:
        raise ValueError("conformal point has zero weight (point at infinity)")
    return np.array(mv.values[1:4]) / weight


class Quaternion:
    """Quaternion (w, x, y, z); rotations use unit quaternions."""

    __slots__ = ("w", "x", "y", "z")

    def __init__(self, w, x, y, z):
        self.w = float(w)
        self.x = float(x)
        self.y = float(y)
        self.z = float(z)

    def __mul__(self, other):
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self):
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm(self):
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self):
        n = self.norm()
        if n < 1e-300:
            raise ValueError("cannot normalize a zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def rotate(self, v):
        return self.to_matrix() @ np.asarray(v, dtype=np.float64)

    def to_matrix(self):
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __repr__(self):
        return f"Quaternion({self.w:.6g}, {self.x:.6g}, {self.y:.6g}, {self.z:.6g})"


def quaternion_align_y(n):
    """Minimal rotation taking (0, 1, 0) onto the unit direction n.

    Built from the half-angle identity: the unnormalized quaternion is
    (1 + y.n, y x n).  Near n = (0, -1, 0) that vanishes, so the rotation
    falls back to a half turn about the x axis.
    """
    n = np.asarray(n, dtype=np.float64)
    w = 1.0 + n[1]
    if w < 1e-13:
        return Quaternion(0.0, 1.0, 0.0, 0.0)
    return Quaternion(w, n[2], 0.0, -n[0]).normalized()


def rotor_from_quaternion(q):
    """Rotor whose sandwich action matches the quaternion rotation.

    With q = cos(t/2) + sin(t/2)(ux i + uy j + uz k), the rotor is
    exp(-t/2 B) for the unit bivector B dual to the axis u.
    """
    mv = Multivector32()
    mv.values[0] = q.w
    mv.values[_IDX_E12] = -q.z
    mv.values[_IDX_E13] = q.y
    mv.values[_IDX_E23] = -q.x
    return mv


def translator(t):
    """Translation versor 1 - 0.5 * t * ni."""
    t = np.asarray(t, dtype=np.float64)
    mv = scalar(1.0)
    for axis in range(3):
        mv.values[_IDX_E_EP[axis]] = -0.5 * t[axis]
        mv.values[_IDX_E_EM[axis]] = -0.5 * t[axis]
    return mv


def encode_vertex_normal(position, normal):
    """Motor carrying the canonical frame (origin, +y) onto (position, normal).

    The normal is normalized first; a zero-length normal falls back to
    (0, 1, 0) so the motor degenerates to a pure translation.
    """
    n = np.asarray(normal, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        n = np.array([0.0, 1.0, 0.0])
    else:
        n = n / norm
    rot = rotor_from_quaternion(quaternion_align_y(n))
    return geometric_product(translator(position), rot)


# Support blades of the two motor factors; the batched product below only
# touches these 7 x 4 term pairs instead of the full 32 x 32 table.
_TRANSLATOR_SUPPORT = (0,) + _IDX_E_EP + _IDX_E_EM
_ROTOR_SUPPORT = (0, _IDX_E12, _IDX_E13, _IDX_E23)


def encode_batch(positions, normals):
    """Row-per-vertex motor coefficients, (n, 32) float64.

    Matches encode_vertex_normal applied row by row; kept separate so large
    meshes avoid per-vertex Python dispatch.
    """
    positions = np.asarray(positions, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if positions.shape != normals.shape or positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError("positions and normals must both have shape (n, 3)")
    count = positions.shape[0]

    lengths = np.linalg.norm(normals, axis=1)
    unit = np.where(lengths[:, None] < 1e-12, [0.0, 1.0, 0.0], normals / np.maximum(lengths, 1e-300)[:, None])

    quat = np.zeros((count, 4))
    w = 1.0 + unit[:, 1]
    flipped = w < 1e-13
    quat[:, 0] = w
    quat[:, 1] = unit[:, 2]
    quat[:, 3] = -unit[:, 0]
    quat[flipped] = (0.0, 1.0, 0.0, 0.0)
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)

    rotor = np.zeros((count, 4))
    rotor[:, 0] = quat[:, 0]
    rotor[:, 1] = -quat[:, 3]  # e12
    rotor[:, 2] = quat[:, 2]  # e13
    rotor[:, 3] = -quat[:, 1]  # e23

    trans = np.zeros((count, 7))
    trans[:, 0] = 1.0
    trans[:, 1:4] = -0.5 * positions
    trans[:, 4:7] = -0.5 * positions

    out = np.zeros((count, 32))
    for col_t, blade_t in enumerate(_TRANSLATOR_SUPPORT):
        for col_r, blade_r in enumerate(_ROTOR_SUPPORT):
            target = TARGET_TABLE[blade_t, blade_r]
            out[:, target] += SIGN_TABLE[blade_t, blade_r] * trans[:, col_t] * rotor[:, col_r]
    return out


def motor_to_matrix(motor):
    """Expand a motor into the equivalent 4x4 homogeneous transform."""
    unit = geometric_product(motor, reverse(motor)).values
    if abs(unit[0] - 1.0) > 1e-6 or np.max(np.abs(unit[1:])) > 1e-6:
        raise ValueError("motor fails the unit versor check (M * ~M != 1)")
    mat = np.eye(4)
    for axis in range(3):
        image = apply_versor(motor, basis_vector(BASIS_NAMES[axis]))
        mat[:3, axis] = image.values[1:4]
    origin = apply_versor(motor, conformal_point((0.0, 0.0, 0.0)))
    mat[:3, 3] = point_to_euclidean(origin)
    return mat
