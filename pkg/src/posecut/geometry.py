"""Rigid motions in the plane and in space.

Poses are small immutable value types.  Tangent vectors ("twists") are plain
numpy arrays ordered translation first, rotation last::

    SE(2): [vx, vy, w]
    SE(3): [vx, vy, vz, wx, wy, wz]

so that ``exp_map(v)`` and ``log_map(p)`` line up with the residual layout the
optimizer uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

SMALL_ANGLE = 1e-7
_SERIES_ANGLE = 1e-3   # below this, difference quotients lose digits; use Taylor series
_TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Map ``a`` into (-pi, pi].  Values already in range are returned untouched."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, _TWO_PI)
    if a <= 0.0:
        a += _TWO_PI
    return a - math.pi


@dataclass(frozen=True, slots=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    dim = 2

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def _canonical_quat(w, x, y, z):
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("quaternion must be finite and non-zero")
    # leave already-normalized input alone so read/write cycles are bit-stable
    if abs(n - 1.0) > 1e-12:
        w, x, y, z = w / n, x / n, y / n, z / n
    flip = w < 0.0
    if w == 0.0:
        # rotation by exactly pi: pick the axis whose first non-zero entry is positive
        for c in (x, y, z):
            if c != 0.0:
                flip = c < 0.0
                break
    if flip:
        w, x, y, z = -w, -x, -y, -z
    return (w + 0.0, x + 0.0, y + 0.0, z + 0.0)


@dataclass(frozen=True, slots=True)
class Pose3:
    """Spatial pose; ``q`` is a unit quaternion stored as (w, x, y, z) with w >= 0."""

    t: tuple = (0.0, 0.0, 0.0)
    q: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in self.t)
        if len(t) != 3:
            raise ValueError("translation needs 3 components")
        q = tuple(float(v) for v in self.q)
        if len(q) != 4:
            raise ValueError("quaternion needs 4 components")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", _canonical_quat(*q))

    dim = 3

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.t)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def as_array(self) -> np.ndarray:
        return np.array(self.t + self.q)


Pose = Union[Pose2, Pose3]


def identity(dim: int) -> Pose:
    if dim == 2:
        return Pose2()
    if dim == 3:
        return Pose3()
    raise ValueError(f"unsupported dimension {dim}")


# -- quaternion helpers -------------------------------------------------------

def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> tuple:
    """Shepperd's method; returns (w, x, y, z)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        return (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
    if R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        return ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
    if R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        return ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
    s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
    return ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)


def _rotate(q, v):
    return quat_to_matrix(q) @ v


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


# -- group operations -----------------------------------------------------------

def _check_dims(a, b):
    if type(a) is not type(b):
        raise TypeError(f"cannot mix {type(a).__name__} and {type(b).__name__}")


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a * b``."""
    _check_dims(a, b)
    if isinstance(a, Pose2):
        c, s = math.cos(a.theta), math.sin(a.theta)
        return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)
    t = np.array(a.t) + _rotate(a.q, np.array(b.t))
    return Pose3(tuple(t), quat_multiply(a.q, b.q))


def inverse(p: Pose) -> Pose:
    if isinstance(p, Pose2):
        c, s = math.cos(p.theta), math.sin(p.theta)
        return Pose2(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta)
    w, x, y, z = p.q
    qi = (w, -x, -y, -z)
    t = -_rotate(qi, np.array(p.t))
    return Pose3(tuple(t), qi)


def between(a: Pose, b: Pose) -> Pose:
    """Relative pose ``a^-1 * b``."""
    _check_dims(a, b)
    if isinstance(a, Pose2):
        c, s = math.cos(a.theta), math.sin(a.theta)
        dx, dy = b.x - a.x, b.y - a.y
        return Pose2(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta)
    return compose(inverse(a), b)


def rotation_angle(p: Pose) -> float:
    """Magnitude of the rotation part, in [0, pi]."""
    if isinstance(p, Pose2):
        return abs(p.theta)
    w = min(1.0, p.q[0])
    v = math.sqrt(p.q[1] ** 2 + p.q[2] ** 2 + p.q[3] ** 2)
    return 2.0 * math.atan2(v, w)


def translation_norm(p: Pose) -> float:
    if isinstance(p, Pose2):
        return math.hypot(p.x, p.y)
    return math.sqrt(sum(c * c for c in p.t))


# -- exponential / logarithm ----------------------------------------------------

def _se2_v_coeffs(theta):
    if abs(theta) < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0
    half = math.sin(0.5 * theta)
    return math.sin(theta) / theta, 2.0 * half * half / theta


def _so3_coeffs(theta):
    """Coefficients A=(1-cos)/th^2 and B=(th-sin)/th^3 of the left Jacobian."""
    t2 = theta * theta
    if theta < _SERIES_ANGLE:
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    half = math.sin(0.5 * theta)
    return 2.0 * half * half / t2, (theta - math.sin(theta)) / (t2 * theta)


def so3_log(q) -> np.ndarray:
    w, x, y, z = q
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < SMALL_ANGLE:
        # atan2(vn, w)/vn ~ 1/w for tiny vn
        k = 2.0 / w
    else:
        k = 2.0 * math.atan2(vn, w) / vn
    return np.array([k * x, k * y, k * z])


def so3_exp(w) -> tuple:
    theta = math.sqrt(float(w[0]) ** 2 + float(w[1]) ** 2 + float(w[2]) ** 2)
    if theta < SMALL_ANGLE:
        k = 0.5 - theta * theta / 48.0
    else:
        k = math.sin(0.5 * theta) / theta
    return (math.cos(0.5 * theta), k * w[0], k * w[1], k * w[2])


def log_map(p: Pose) -> np.ndarray:
    """Tangent coordinates of ``p``.

    Rotations of exactly pi take the positive-axis branch: SE(2) headings are
    already wrapped to +pi and SE(3) quaternions with w == 0 are canonicalized
    so their first non-zero vector component is positive.
    """
    if isinstance(p, Pose2):
        th = p.theta
        a, b = _se2_v_coeffs(th)
        det = a * a + b * b
        return np.array([(a * p.x + b * p.y) / det, (-b * p.x + a * p.y) / det, th])
    omega = so3_log(p.q)
    theta = float(np.linalg.norm(omega))
    W = skew(omega)
    t2 = theta * theta
    if theta < _SERIES_ANGLE:
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = math.sin(0.5 * theta)
        c = (1.0 - theta * math.sin(theta) / (4.0 * half * half)) / t2
    V_inv = np.eye(3) - 0.5 * W + c * (W @ W)
    rho = V_inv @ np.array(p.t)
    return np.concatenate([rho, omega])


def exp_map(v) -> Pose:
    v = np.asarray(v, dtype=float)
    if v.shape == (3,):
        th = float(v[2])
        a, b = _se2_v_coeffs(th)
        return Pose2(a * v[0] - b * v[1], b * v[0] + a * v[1], th)
    if v.shape == (6,):
        omega = v[3:]
        theta = float(np.linalg.norm(omega))
        A, B = _so3_coeffs(theta)
        W = skew(omega)
        V = np.eye(3) + A * W + B * (W @ W)
        return Pose3(tuple(V @ v[:3]), so3_exp(omega))
    raise ValueError(f"twist must have 3 or 6 entries, got shape {v.shape}")


def to_matrix(p: Pose) -> np.ndarray:
    """Homogeneous matrix of ``p``."""
    d = p.dim
    M = np.eye(d + 1)
    M[:d, :d] = p.rotation_matrix()
    M[:d, d] = p.translation
    return M


def from_matrix(M) -> Pose:
    M = np.asarray(M, dtype=float)
    if M.shape == (3, 3):
        return Pose2(M[0, 2], M[1, 2], math.atan2(M[1, 0], M[0, 0]))
    if M.shape == (4, 4):
        return Pose3(tuple(M[:3, 3]), matrix_to_quat(M[:3, :3]))
    raise ValueError(f"expected 3x3 or 4x4 matrix, got {M.shape}")


def pose_from_array(a, dim: int) -> Pose:
    """Inverse of ``Pose*.as_array``."""
    if dim == 2:
        return Pose2(a[0], a[1], a[2])
    return Pose3(tuple(a[:3]), tuple(a[3:7]))


def pose_distance(a: Pose, b: Pose) -> float:
    return float(np.linalg.norm(a.translation - b.translation))
