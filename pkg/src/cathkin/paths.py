"""Target path generation and error decomposition for tracking experiments.

The experiment harness follows circular paths. A path lives in the plane
through ``center`` with unit ``normal``; waypoints are evenly spaced on the
circle and ordered counter-clockwise when viewed from the +normal side
(or clockwise if requested).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = ("ccw", "cw")


def _default_center() -> np.ndarray:
    # verified interior to the tip workspace by an IK sweep over the
    # whole actuation box for the default geometry (the z=95 shell is
    # an annulus the circle cannot enter)
    return np.array([0.0, 0.0, 120.0])


def _default_normal() -> np.ndarray:
    # plane tilted 30 degrees away from the base z axis
    return np.array([math.sin(math.pi / 6.0), 0.0, math.cos(math.pi / 6.0)])


@dataclass(frozen=True)
class PathSpec:
    """Circle to follow: geometry, discretization, and traversal direction."""

    kind: str = "circle"
    center: np.ndarray = field(default_factory=_default_center)
    normal: np.ndarray = field(default_factory=_default_normal)
    radius: float = 20.0
    n_points: int = 72
    direction: str = "ccw"
    start_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))

    def validate(self) -> None:
        if self.kind != "circle":
            raise ValueError(f"unsupported path kind {self.kind!r}")
        if self.center.shape != (3,) or not np.all(np.isfinite(self.center)):
            raise ValueError("center must be a finite 3-vector")
        if self.normal.shape != (3,) or not np.all(np.isfinite(self.normal)):
            raise ValueError("normal must be a finite 3-vector")
        if abs(float(np.linalg.norm(self.normal)) - 1.0) > 1e-6:
            raise ValueError("normal must be a unit vector")
        if not (np.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not np.isfinite(self.start_phase):
            raise ValueError("start_phase must be finite")


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane axes (u, v) with u x v = normal."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    u = np.cross(n, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(u) < 1e-12:
        # plane is horizontal; anchor u to the x axis instead
        u = np.cross(n, np.array([1.0, 0.0, 0.0]))
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def generate_path(spec: PathSpec) -> np.ndarray:
    """Waypoints (n_points, 3) evenly spaced on the circle, ordered
    per the traversal direction and starting at ``start_phase``."""
    spec.validate()
    u, v = plane_basis(spec.normal)
    sign = 1.0 if spec.direction == "ccw" else -1.0
    k = np.arange(spec.n_points)
    phi = spec.start_phase + sign * 2.0 * np.pi * k / spec.n_points
    points = (
        spec.center[None, :]
        + spec.radius * np.cos(phi)[:, None] * u[None, :]
        + spec.radius * np.sin(phi)[:, None] * v[None, :]
    )
    return points


def decompose_error(error_vec: np.ndarray, path_normal: np.ndarray) -> tuple[float, float]:
    """Split a tip error into components perpendicular to and within the
    path plane. Returns (out_of_plane, in_plane), both nonnegative."""
    e = np.asarray(error_vec, dtype=float)
    n = np.asarray(path_normal, dtype=float)
    if e.shape != (3,) or n.shape != (3,):
        raise ValueError("error and normal must be 3-vectors")
    if abs(float(np.linalg.norm(n)) - 1.0) > 1e-6:
        raise ValueError("path normal must be a unit vector")
    along = float(e @ n)
    out_of_plane = abs(along)
    in_plane = float(np.linalg.norm(e - along * n))
    return out_of_plane, in_plane
