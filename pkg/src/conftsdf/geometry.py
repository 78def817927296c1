"""Rigid-body poses and the pinhole camera model.

Conventions: camera looks along +z (+x right, +y down); poses map camera
coordinates to world coordinates; quaternions are stored (w, x, y, z) and
renormalized on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, InvalidDepth


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector components must be finite")
    return a


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError("quaternion norm too small to normalize")
    return q / n


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) from a rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Shortest-path spherical interpolation between unit quaternions."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + u * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize(
        (np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1
    )


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform (unit quaternion + translation)."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point or an (N, 3) batch into the world frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + self.translation

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.rotation)
        return Pose(qc, -(quat_to_matrix(qc) @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first, then `self`."""
        return Pose(
            quat_multiply(self.rotation, other.rotation),
            self.apply(other.translation),
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters plus stereo baseline (meters)."""

    alpha_x: float
    alpha_y: float
    o_x: float
    o_y: float
    width: int
    height: int
    baseline: float

    def __post_init__(self):
        if self.alpha_x <= 0 or self.alpha_y <= 0:
            raise ValueError("focal lengths must be positive")
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")
        if not (0 <= self.o_x < self.width and 0 <= self.o_y < self.height):
            raise ValueError("principal point must lie inside the image")


def project(point, intr: CameraIntrinsics) -> tuple[float, float]:
    """Pinhole projection to real-valued (sub-pixel) coordinates."""
    p = _as_vec3(point)
    if p[2] <= 0:
        raise BehindCamera(f"point with z={p[2]} cannot be projected")
    a = intr.alpha_x * p[0] / p[2] + intr.o_x
    b = intr.alpha_y * p[1] / p[2] + intr.o_y
    return float(a), float(b)


def backproject(pixel, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Lift a pixel at a given depth back into the camera frame."""
    if depth <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth}")
    a, b = pixel
    return np.array(
        [
            (a - intr.o_x) * depth / intr.alpha_x,
            (b - intr.o_y) * depth / intr.alpha_y,
            depth,
        ]
    )


def transform(pose: Pose, point) -> np.ndarray:
    return pose.apply(_as_vec3(point))
