"""Minimal rigid-body math: rotation matrices, poses, skew operator.

Conventions used across the package: right-handed frames, angles in
radians, lengths in millimeters. Rotations are stored as full 3x3
matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _require_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def rot_z(angle: float) -> np.ndarray:
    """Right-handed rotation matrix about the z axis."""
    angle = _require_finite(angle, "angle")
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    """Right-handed rotation matrix about the y axis."""
    angle = _require_finite(angle, "angle")
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def skew(v) -> np.ndarray:
    """Matrix form of the cross product: skew(v) @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: 3x3 rotation plus position in mm.

    Instances are value types; the stored arrays are copies marked
    read-only so poses can be shared freely.
    """

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=float).reshape(3, 3)
        pos = np.array(self.position, dtype=float).reshape(3)
        rot.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "position", pos)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.position + self.position,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.position))

    def transform_point(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float).reshape(3) + self.position

    def rotate_vector(self, vector) -> np.ndarray:
        return self.rotation @ np.asarray(vector, dtype=float).reshape(3)

    @property
    def z_axis(self) -> np.ndarray:
        """Third column of the rotation: local z expressed in the parent frame."""
        return self.rotation[:, 2]

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.position
        return m


def identity_pose() -> Pose:
    return Pose(np.eye(3), np.zeros(3))


def translate_z(distance: float) -> Pose:
    """Pure translation along the local z axis."""
    distance = _require_finite(distance, "distance")
    return Pose(np.eye(3), np.array([0.0, 0.0, distance]))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def is_rotation(matrix, tol: float = 1e-10) -> bool:
    """Orthonormality and determinant check for a candidate rotation."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    return bool(
        np.linalg.norm(m.T @ m - np.eye(3)) < tol
        and abs(np.linalg.det(m) - 1.0) < tol
    )


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = (float(angle) + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if w == -math.pi else w
