"""Simulated ground-truth robot and tracker, standing in for hardware.

The plant owns the "true" actuation parameters and geometry, which in
mismatch studies differ from the controller's copies. Three mismatch
mechanisms are modeled: rotary backlash (a rate-independent play
operator between commanded and effective handle angles), curvature
distortion (each arc is really two sub-arcs of unequal curvature, so
the constant-curvature model is wrong even at the true parameters),
and sensor corruption (Gaussian position noise, small random tangent
rotations, and a rigid registration offset between tracker and base
frames).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actuation import (
    ActuationLimits,
    ActuationParams,
    ActuationQ,
    exposed_length,
    flip_negative_bends,
    shape_map_unchecked,
)
from .estimation import CoilReading
from .kinematics import THETA_MAX, ConfigPsi, RobotGeometry, coil_fk, segment_fk
from .transforms import Pose, translate_z

# handle axes subject to backlash (rotary transmissions)
_ROTARY = ("delta1", "gamma1", "delta2", "gamma2")


class PlantFault(RuntimeError):
    """Command outside the plant's physical range (hardware limit stop)."""


@dataclass(frozen=True)
class PlantConfig:
    true_params: ActuationParams = ActuationParams()
    true_geom: RobotGeometry = RobotGeometry()
    limits: ActuationLimits = ActuationLimits()
    backlash_width: float = 0.0
    sensor_noise_sigma_pos: float = 0.0
    sensor_noise_sigma_tangent: float = 0.0
    curvature_distortion: float = 0.0
    registration_translation: float = 0.0
    registration_rotation: float = 0.0
    rng_seed: int = 0

    def validate(self) -> None:
        self.true_params.validate()
        self.true_geom.validate()
        self.limits.validate()
        if self.backlash_width < 0.0:
            raise ValueError(f"backlash_width must be >= 0, got {self.backlash_width}")
        if self.sensor_noise_sigma_pos < 0.0 or self.sensor_noise_sigma_tangent < 0.0:
            raise ValueError("sensor noise sigmas must be >= 0")
        if not abs(self.curvature_distortion) < 1.0:
            raise ValueError(
                f"curvature_distortion must lie in (-1, 1), got {self.curvature_distortion}"
            )
        if self.registration_translation < 0.0 or self.registration_rotation < 0.0:
            raise ValueError("registration error magnitudes must be >= 0")


@dataclass
class PlantState:
    """Observable internal state: command history, post-backlash handle
    values, and the resulting true shape."""

    history: list[ActuationQ] = field(default_factory=list)
    effective_q: ActuationQ | None = None
    true_psi: ConfigPsi | None = None
    true_geom: RobotGeometry | None = None


def play_operator(previous: float, command: float, width: float) -> float:
    """Rate-independent play (backlash) update of half-width `width`.

    The output trails the command by up to `width` and only moves when
    the command drags it along.
    """
    return min(max(previous, command - width), command + width)


def make_registration(translation: float, rotation: float, rng) -> Pose:
    """Random rigid offset with the given translation and angle sizes.

    Directions come from the provided generator; zero magnitudes draw
    nothing, so disabled errors leave the stream untouched.
    """
    position = np.zeros(3)
    rot = np.eye(3)
    if translation > 0.0:
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        position = translation * direction
    if rotation > 0.0:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        c, s = math.cos(rotation), math.sin(rotation)
        k = np.array(
            [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
        )
        rot = np.eye(3) + s * k + (1.0 - c) * (k @ k)
    return Pose(rot, position)


def _distorted_partial(theta: float, length: float, delta: float, d: float, offset: float) -> Pose:
    """Pose at arc length (length - offset) of a distorted segment.

    The segment is two equal-length sub-arcs bending theta(1+d)/2 and
    theta(1-d)/2 in the same plane; total length and total bend match
    the ideal arc.
    """
    s = length - offset
    half = 0.5 * length
    theta_a = 0.5 * theta * (1.0 + d)
    theta_b = 0.5 * theta * (1.0 - d)
    if s <= half:
        frac = s / half
        return segment_fk(theta_a * frac, s, delta)
    first = segment_fk(theta_a, half, delta)
    rest = s - half
    frac = rest / half
    return first.compose(segment_fk(theta_b * frac, rest, delta))


class TendonPlant:
    """Single-owner stateful simulator driven through command/read_coils."""

    def __init__(self, config: PlantConfig, initial_q: ActuationQ):
        config.validate()
        self.config = config
        self._rng = np.random.default_rng(config.rng_seed)
        self._registration = make_registration(
            config.registration_translation, config.registration_rotation, self._rng
        )
        self.state = PlantState()
        self._reads = 0
        # backlash state starts centered on the initial command
        self._effective = {name: getattr(initial_q, name) for name in _ROTARY}
        self.command(initial_q)

    @property
    def registration(self) -> Pose:
        """Tracker-from-base transform the sensors report through."""
        return self._registration

    def command(self, q: ActuationQ) -> PlantState:
        """Apply a handle command; returns the updated state."""
        q.validate()
        if not self.config.limits.contains(q):
            for name in ("delta1", "beta1", "gamma1", "delta2", "beta2", "gamma2"):
                lo, hi = getattr(self.config.limits, name)
                v = getattr(q, name)
                if not (lo <= v <= hi):
                    raise PlantFault(
                        f"command {name}={v:.6g} outside physical range [{lo:.6g}, {hi:.6g}]"
                    )
        width = self.config.backlash_width
        effective = dict(self._effective)
        for name in _ROTARY:
            effective[name] = play_operator(effective[name], getattr(q, name), width)
        eff_q = ActuationQ(
            delta1=effective["delta1"],
            beta1=q.beta1,
            gamma1=effective["gamma1"],
            delta2=effective["delta2"],
            beta2=q.beta2,
            gamma2=effective["gamma2"],
        )

        psi = flip_negative_bends(shape_map_unchecked(eff_q, self.config.true_params))
        if psi.theta1 > THETA_MAX or psi.theta2 > THETA_MAX:
            raise PlantFault(
                f"command bends a segment out of range (theta1={psi.theta1:.4g},"
                f" theta2={psi.theta2:.4g})"
            )
        try:
            ln = exposed_length(eff_q, self.config.true_params)
        except ValueError as exc:
            raise PlantFault(str(exc)) from None
        geom = RobotGeometry(
            Ln=ln,
            coil_offset1=self.config.true_geom.coil_offset1,
            coil_offset2=self.config.true_geom.coil_offset2,
        )

        self._effective = effective
        self.state.history.append(q)
        self.state.effective_q = eff_q
        self.state.true_psi = psi
        self.state.true_geom = geom
        return self.state

    def _true_coil_poses(self) -> tuple[Pose, Pose]:
        psi = self.state.true_psi
        geom = self.state.true_geom
        d = self.config.curvature_distortion
        if d == 0.0:
            return coil_fk(psi, geom)
        coil1 = _distorted_partial(psi.theta1, psi.L1, psi.delta1, d, geom.coil_offset1)
        seg1 = _distorted_partial(psi.theta1, psi.L1, psi.delta1, d, 0.0)
        base2 = seg1.compose(translate_z(geom.Ln))
        coil2 = base2.compose(
            _distorted_partial(psi.theta2, psi.L2, psi.delta2, d, geom.coil_offset2)
        )
        return coil1, coil2

    def true_tip_position(self) -> np.ndarray:
        """Ground-truth controlled point in the base frame (no sensor
        corruption); for analysis only, the controller never sees it."""
        _, coil2 = self._true_coil_poses()
        return coil2.position

    def _corrupt(self, pose: Pose, coil_id: str, timestamp: float) -> CoilReading:
        position = self._registration.transform_point(pose.position)
        tangent = self._registration.rotate_vector(pose.z_axis)
        sigma_p = self.config.sensor_noise_sigma_pos
        sigma_t = self.config.sensor_noise_sigma_tangent
        if sigma_p > 0.0:
            position = position + self._rng.normal(0.0, sigma_p, size=3)
        if sigma_t > 0.0:
            angle = self._rng.normal(0.0, sigma_t)
            phase = self._rng.uniform(0.0, 2.0 * math.pi)
            # orthonormal pair spanning the plane perpendicular to the tangent
            helper = np.array([1.0, 0.0, 0.0])
            if abs(tangent[0]) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            u = np.cross(tangent, helper)
            u /= np.linalg.norm(u)
            v = np.cross(tangent, u)
            axis = math.cos(phase) * u + math.sin(phase) * v
            c, s = math.cos(angle), math.sin(angle)
            tangent = (
                c * tangent + s * np.cross(axis, tangent)
                + (1.0 - c) * (axis @ tangent) * axis
            )
            tangent = tangent / np.linalg.norm(tangent)
        return CoilReading(position=position, tangent=tangent, coil_id=coil_id,
                           timestamp=timestamp)

    def read_coils(self) -> tuple[CoilReading, CoilReading]:
        """Sample both tracking coils through the corrupted sensor path."""
        if self.state.true_psi is None:
            raise PlantFault("plant has not been commanded yet")
        coil1, coil2 = self._true_coil_poses()
        stamp = float(self._reads)
        self._reads += 1
        return (
            self._corrupt(coil1, "sheath", stamp),
            self._corrupt(coil2, "catheter", stamp),
        )
