"""Constant-curvature kinematics for a two-segment concentric robot.

Each segment is a circular arc parameterized by bending angle theta,
arc length L, and bending-plane angle delta. The whole robot chains the
outer (sheath) segment, a straight gap of exposed inner body, and the
inner (catheter) segment. EM sensor coils sit a fixed arc length back
from each segment tip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .transforms import Pose, rot_z, rot_y, translate_z, wrap_angle

# Bending angle below which the arc helpers switch to Taylor series.
# Both branches carry full double precision at this point, so the
# switch itself is seamless; the series side avoids the catastrophic
# cancellation the closed forms suffer near zero.
ARC_EPS = 1e-4

# Bending is kept strictly below a full half turn. theta == pi folds
# the segment back onto its base and the chord-based fit degenerates.
THETA_MAX = math.pi * 0.999


def arc_h(theta: float) -> float:
    """(1 - cos(theta)) / theta, continuously extended to 0 at theta = 0."""
    if abs(theta) < ARC_EPS:
        t2 = theta * theta
        return theta * (0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    # 2 sin^2(t/2) / t avoids cancellation in 1 - cos(t)
    s = math.sin(0.5 * theta)
    return 2.0 * s * s / theta


def arc_sinc(theta: float) -> float:
    """sin(theta) / theta, continuously extended to 1 at theta = 0."""
    if abs(theta) < ARC_EPS:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return math.sin(theta) / theta


def arc_h_prime(theta: float) -> float:
    """d/dtheta of arc_h."""
    if abs(theta) < ARC_EPS:
        t2 = theta * theta
        return 0.5 - t2 / 8.0 + t2 * t2 / 144.0
    return (math.sin(theta) - arc_h(theta)) / theta


def arc_sinc_prime(theta: float) -> float:
    """d/dtheta of arc_sinc."""
    if abs(theta) < ARC_EPS:
        t2 = theta * theta
        return theta * (-1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0)
    return (math.cos(theta) - arc_sinc(theta)) / theta


@dataclass(frozen=True)
class ConfigPsi:
    """Task-space configuration of both segments.

    Order matches the stacked vector used throughout:
    (theta1, L1, delta1, theta2, L2, delta2). Angles in radians,
    lengths in mm. Segment 1 is the outer sheath, segment 2 the inner
    catheter.
    """

    theta1: float
    L1: float
    delta1: float
    theta2: float
    L2: float
    delta2: float

    def validate(self) -> None:
        for name in ("theta1", "L1", "delta1", "theta2", "L2", "delta2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.L1 <= 0.0 or self.L2 <= 0.0:
            raise ValueError(
                f"segment lengths must be positive, got L1={self.L1}, L2={self.L2}"
            )
        if not (0.0 <= self.theta1 <= THETA_MAX) or not (0.0 <= self.theta2 <= THETA_MAX):
            raise ValueError(
                "bending angles must lie in [0, pi), got "
                f"theta1={self.theta1}, theta2={self.theta2}"
            )

    def normalized(self) -> "ConfigPsi":
        """Copy with both plane angles wrapped to (-pi, pi]."""
        return replace(
            self, delta1=wrap_angle(self.delta1), delta2=wrap_angle(self.delta2)
        )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.theta1, self.L1, self.delta1, self.theta2, self.L2, self.delta2]
        )

    @staticmethod
    def from_array(psi) -> "ConfigPsi":
        t1, l1, d1, t2, l2, d2 = (float(x) for x in np.asarray(psi).reshape(6))
        return ConfigPsi(t1, l1, d1, t2, l2, d2)


@dataclass(frozen=True)
class RobotGeometry:
    """Fixed geometry of the chained robot.

    Ln is the straight exposed length of inner body between the sheath
    tip and the start of the catheter bend. Coil offsets are arc
    lengths from each segment tip back to its sensor coil.
    """

    Ln: float = 10.0
    coil_offset1: float = 0.0
    coil_offset2: float = 0.0

    def validate(self) -> None:
        if not math.isfinite(self.Ln) or self.Ln < 0.0:
            raise ValueError(f"Ln must be nonnegative, got {self.Ln!r}")
        for name in ("coil_offset1", "coil_offset2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be nonnegative, got {v!r}")


def segment_fk(theta: float, length: float, delta: float) -> Pose:
    """Tip pose of one constant-curvature segment in its base frame.

    The segment bends by theta in the plane at azimuth delta. The
    rotation is Rz(delta) Ry(theta) Rz(-delta), so at theta = 0 it is
    the identity regardless of delta.
    """
    h = arc_h(theta)
    s = arc_sinc(theta)
    cd, sd = math.cos(delta), math.sin(delta)
    position = length * np.array([h * cd, h * sd, s])
    rotation = rot_z(delta) @ rot_y(theta) @ rot_z(-delta)
    return Pose(rotation, position)


def full_fk(psi: ConfigPsi, geometry: RobotGeometry) -> Pose:
    """Tip pose of the two-segment chain in the robot base frame.

    Sheath arc, then the straight exposed length Ln along the sheath
    tip tangent, then the catheter arc.
    """
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    pose2 = segment_fk(psi.theta2, psi.L2, psi.delta2)
    return pose1.compose(translate_z(geometry.Ln)).compose(pose2)


def _partial_segment(theta: float, length: float, delta: float, offset: float) -> Pose:
    """Pose at arc length (length - offset) from the segment base.

    Curvature is uniform along the arc, so the bend angle accrued up to
    the coil scales with arc length.
    """
    if offset <= 0.0:
        return segment_fk(theta, length, delta)
    if offset >= length:
        raise ValueError(
            f"coil offset {offset} must be smaller than segment length {length}"
        )
    frac = (length - offset) / length
    return segment_fk(theta * frac, length - offset, delta)


def coil_fk(psi: ConfigPsi, geometry: RobotGeometry) -> tuple[Pose, Pose]:
    """Poses of the two sensor coils in the robot base frame.

    Coil 1 sits coil_offset1 back from the sheath tip along its arc,
    coil 2 sits coil_offset2 back from the catheter tip.
    """
    coil1 = _partial_segment(psi.theta1, psi.L1, psi.delta1, geometry.coil_offset1)
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    base2 = pose1.compose(translate_z(geometry.Ln))
    coil2 = base2.compose(
        _partial_segment(psi.theta2, psi.L2, psi.delta2, geometry.coil_offset2)
    )
    return coil1, coil2
