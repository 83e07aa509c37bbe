"""Analytic Jacobians of the kinematics and actuation maps.

Derivatives here were derived symbolically from the forward maps and
are cross-checked numerically: finite_difference_report is a
first-class operation (also exposed on the CLI), not just test code,
because the analytic forms are easy to get subtly wrong.

Column conventions: segment Jacobians differentiate w.r.t.
(theta, L, delta); whole-robot Jacobians w.r.t. the stacked shape
vector (theta1, L1, delta1, theta2, L2, delta2); the actuation
Jacobian w.r.t. (delta1, beta1, gamma1, delta2, beta2, gamma2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actuation import ActuationParams, ActuationQ, shape_map_unchecked
from .kinematics import (
    ConfigPsi,
    RobotGeometry,
    arc_h,
    arc_h_prime,
    arc_sinc,
    arc_sinc_prime,
    segment_fk,
)
from .transforms import Pose, skew, translate_z


@dataclass(frozen=True)
class SegmentJacobian:
    """Linear (Jv) and angular (Jw) velocity maps of one segment.

    p_dot = Jv @ [theta_dot, L_dot, delta_dot], likewise omega = Jw @
    the same rates, both expressed in the segment base frame.
    """

    Jv: np.ndarray
    Jw: np.ndarray

    def __post_init__(self) -> None:
        jv = np.array(self.Jv, dtype=float).reshape(3, 3)
        jw = np.array(self.Jw, dtype=float).reshape(3, 3)
        jv.setflags(write=False)
        jw.setflags(write=False)
        object.__setattr__(self, "Jv", jv)
        object.__setattr__(self, "Jw", jw)


@dataclass(frozen=True)
class ControlJacobian:
    """Composite Jacobian used by the controller: J = Jv_full @ Jq."""

    Jv_full: np.ndarray
    Jq: np.ndarray
    J: np.ndarray


class RankDeficiencyError(np.linalg.LinAlgError):
    """Pseudo-inverse requested without damping on a rank-deficient J."""


def _check_segment(theta: float, length: float) -> None:
    if not (math.isfinite(theta) and math.isfinite(length)):
        raise ValueError(f"segment parameters must be finite, got theta={theta!r}, L={length!r}")
    if length <= 0.0:
        raise ValueError(f"segment length must be positive, got {length}")


def segment_jacobian(theta: float, length: float, delta: float) -> SegmentJacobian:
    """Analytic derivative of the single-segment forward kinematics."""
    _check_segment(theta, length)
    h = arc_h(theta)
    s = arc_sinc(theta)
    hp = arc_h_prime(theta)
    sp = arc_sinc_prime(theta)
    cd, sd = math.cos(delta), math.sin(delta)
    st = math.sin(theta)
    # 1 - cos(theta) written as theta*h to stay exact near zero
    omc = theta * h
    jv = np.array(
        [
            [length * hp * cd, h * cd, -length * h * sd],
            [length * hp * sd, h * sd, length * h * cd],
            [length * sp, s, 0.0],
        ]
    )
    jw = np.array(
        [
            [-sd, 0.0, -cd * st],
            [cd, 0.0, -sd * st],
            [0.0, 0.0, omc],
        ]
    )
    return SegmentJacobian(jv, jw)


def _coil_chain_jacobian(
    theta: float, length: float, delta: float, offset: float
) -> SegmentJacobian:
    """Jacobian of a point a fixed arc length back from the segment tip,
    w.r.t. the full segment's (theta, L, delta).

    The point sits on a sub-arc of length L - offset whose bend angle
    is theta (L - offset) / L; the chain rule folds the sub-arc
    parameters back onto the full-segment ones.
    """
    if offset <= 0.0:
        return segment_jacobian(theta, length, delta)
    if offset >= length:
        raise ValueError(f"coil offset {offset} must be smaller than segment length {length}")
    frac = (length - offset) / length
    inner = segment_jacobian(theta * frac, length - offset, delta)
    dtheta_dL = theta * offset / (length * length)
    jv = np.column_stack(
        [
            inner.Jv[:, 0] * frac,
            inner.Jv[:, 0] * dtheta_dL + inner.Jv[:, 1],
            inner.Jv[:, 2],
        ]
    )
    jw = np.column_stack(
        [
            inner.Jw[:, 0] * frac,
            inner.Jw[:, 0] * dtheta_dL + inner.Jw[:, 1],
            inner.Jw[:, 2],
        ]
    )
    return SegmentJacobian(jv, jw)


def _partial_segment_pose(theta: float, length: float, delta: float, offset: float) -> Pose:
    if offset <= 0.0:
        return segment_fk(theta, length, delta)
    frac = (length - offset) / length
    return segment_fk(theta * frac, length - offset, delta)


def _catheter_point_jacobians(
    psi: ConfigPsi, geom: RobotGeometry, offset2: float
) -> tuple[np.ndarray, np.ndarray]:
    """3x6 linear and angular Jacobians of a point on the catheter arc.

    The point is offset2 back from the catheter tip. Sheath columns
    carry the lever-arm term: moving the sheath sweeps the whole distal
    assembly about the sheath tip.
    """
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    seg1 = segment_jacobian(psi.theta1, psi.L1, psi.delta1)
    local = _partial_segment_pose(psi.theta2, psi.L2, psi.delta2, offset2)
    chain2 = _coil_chain_jacobian(psi.theta2, psi.L2, psi.delta2, offset2)

    # lever arm from sheath tip to the point, in the base frame
    lever = pose1.rotation @ (np.array([0.0, 0.0, geom.Ln]) + local.position)
    jv = np.empty((3, 6))
    jv[:, :3] = seg1.Jv - skew(lever) @ seg1.Jw
    jv[:, 3:] = pose1.rotation @ chain2.Jv
    jw = np.empty((3, 6))
    jw[:, :3] = seg1.Jw
    jw[:, 3:] = pose1.rotation @ chain2.Jw
    return jv, jw


def robot_linear_jacobian(psi: ConfigPsi, geom: RobotGeometry) -> np.ndarray:
    """3x6 velocity map of the controlled point w.r.t. the shape vector.

    The controlled point is the catheter coil origin (the tip when the
    coil offset is zero).
    """
    psi.validate()
    geom.validate()
    jv, _ = _catheter_point_jacobians(psi, geom, geom.coil_offset2)
    return jv


def coil_jacobians(
    psi: ConfigPsi, geom: RobotGeometry
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """((Jp1, Jw1), (Jp2, Jw2)): 3x6 position and angular Jacobians of
    both sensor coils w.r.t. the shape vector.

    The sheath coil does not depend on the catheter parameters, so its
    last three columns are zero.
    """
    psi.validate()
    geom.validate()
    chain1 = _coil_chain_jacobian(psi.theta1, psi.L1, psi.delta1, geom.coil_offset1)
    jp1 = np.zeros((3, 6))
    jw1 = np.zeros((3, 6))
    jp1[:, :3] = chain1.Jv
    jw1[:, :3] = chain1.Jw
    jp2, jw2 = _catheter_point_jacobians(psi, geom, geom.coil_offset2)
    return (jp1, jw1), (jp2, jw2)


def actuation_jacobian(q: ActuationQ, params: ActuationParams) -> np.ndarray:
    """6x6 derivative dPsi/dq of the handle-to-shape map."""
    q.validate()
    params.validate()
    theta1 = params.k1 * q.gamma1
    cd = math.cos(q.delta1 - q.delta2)
    sd = math.sin(q.delta1 - q.delta2)
    jq = np.zeros((6, 6))
    # rows: theta1, L1, delta1, theta2, L2, delta2
    # cols: delta1, beta1, gamma1, delta2, beta2, gamma2
    jq[0, 2] = params.k1
    jq[1, 1] = 1.0
    jq[2, 0] = 1.0
    jq[3, 0] = -params.kc * theta1 * sd
    jq[3, 2] = params.kc * params.k1 * cd
    jq[3, 3] = params.kc * theta1 * sd
    jq[3, 5] = params.k2
    jq[4, 4] = 1.0
    jq[5, 3] = 1.0
    return jq


def control_jacobian(
    psi: ConfigPsi, q: ActuationQ, params: ActuationParams, geom: RobotGeometry
) -> ControlJacobian:
    """Composite task Jacobian J = Jv_full(psi) @ Jq(q).

    psi may come from shape estimation rather than the actuation model,
    which is the point: a shape-accurate Jv_full with the model's Jq.
    """
    jv_full = robot_linear_jacobian(psi, geom)
    jq = actuation_jacobian(q, params)
    return ControlJacobian(Jv_full=jv_full, Jq=jq, J=jv_full @ jq)


def exposed_length_jacobian(params: ActuationParams) -> np.ndarray:
    """dLn/dq as a 6-vector; zero when the exposed length is fixed."""
    if not params.ln_coupled:
        return np.zeros(6)
    return np.array([0.0, -1.0, 0.0, 0.0, 1.0, 0.0])


def ln_coupling_term(
    psi: ConfigPsi, params: ActuationParams, geom: RobotGeometry
) -> np.ndarray:
    """3x6 correction to J for the q-dependence of the exposed length.

    The shape vector does not carry Ln, so J = Jv_full @ Jq misses the
    motion of the controlled point along the exposed-body direction
    when relative insertion changes. The correction is the outer
    product of that direction (the sheath tip tangent in the base
    frame) with dLn/dq.
    """
    dln = exposed_length_jacobian(params)
    if not dln.any():
        return np.zeros((3, 6))
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    return np.outer(pose1.z_axis, dln)


def damped_pinv(jac: np.ndarray, damping: float = 1e-2) -> np.ndarray:
    """Damped least-squares pseudo-inverse J^T (J J^T + damping^2 I)^-1.

    With damping = 0 and full row rank this is the Moore-Penrose
    pseudo-inverse; rank loss without damping raises.
    """
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2:
        raise ValueError(f"expected a 2-D Jacobian, got shape {jac.shape}")
    if damping < 0.0:
        raise ValueError(f"damping must be nonnegative, got {damping}")
    if damping == 0.0 and np.linalg.matrix_rank(jac) < jac.shape[0]:
        raise RankDeficiencyError(
            "Jacobian is rank deficient and damping is zero; the damped"
            " pseudo-inverse is undefined"
        )
    gram = jac @ jac.T + (damping * damping) * np.eye(jac.shape[0])
    try:
        return np.linalg.solve(gram, jac).T
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Numerical verification. Central finite differences of the forward
# maps are the ground truth the analytic forms must match.


def _fd_columns(func, x0: np.ndarray, step: float) -> np.ndarray:
    cols = []
    for j in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[j] += step
        lo[j] -= step
        cols.append((func(hi) - func(lo)) / (2.0 * step))
    return np.column_stack(cols)


def _fd_angular_columns(rot_func, x0: np.ndarray, step: float) -> np.ndarray:
    """Finite-difference angular velocity columns from a rotation map.

    omega_hat = dR R^T; the skew part is extracted explicitly to shed
    the symmetric truncation error.
    """
    r0 = rot_func(x0)
    cols = []
    for j in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[j] += step
        lo[j] -= step
        dr = (rot_func(hi) - rot_func(lo)) / (2.0 * step)
        om = dr @ r0.T
        om = 0.5 * (om - om.T)
        cols.append(np.array([om[2, 1], om[0, 2], om[1, 0]]))
    return np.column_stack(cols)


def _relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(reference))), 1e-12)
    return float(np.max(np.abs(analytic - reference)) / scale)


def finite_difference_report(
    psi: ConfigPsi,
    q: ActuationQ,
    params: ActuationParams,
    geom: RobotGeometry,
    step: float = 1e-6,
) -> dict[str, float]:
    """Max relative deviation of each analytic Jacobian from central
    finite differences of its forward map, at one configuration.

    Keys: segment1_v/w, segment2_v/w, robot_linear, actuation.
    """
    psi.validate()
    geom.validate()
    report: dict[str, float] = {}

    for label, (theta, length, delta) in (
        ("segment1", (psi.theta1, psi.L1, psi.delta1)),
        ("segment2", (psi.theta2, psi.L2, psi.delta2)),
    ):
        x0 = np.array([theta, length, delta])
        seg = segment_jacobian(theta, length, delta)
        fd_v = _fd_columns(lambda x: segment_fk(x[0], x[1], x[2]).position, x0, step)
        fd_w = _fd_angular_columns(lambda x: segment_fk(x[0], x[1], x[2]).rotation, x0, step)
        report[f"{label}_v"] = _relative_error(seg.Jv, fd_v)
        report[f"{label}_w"] = _relative_error(seg.Jw, fd_w)

    def controlled_point(x: np.ndarray) -> np.ndarray:
        p = ConfigPsi.from_array(x)
        pose1 = segment_fk(p.theta1, p.L1, p.delta1)
        local = _partial_segment_pose(p.theta2, p.L2, p.delta2, geom.coil_offset2)
        return pose1.compose(translate_z(geom.Ln)).transform_point(local.position)

    fd_robot = _fd_columns(controlled_point, psi.as_array(), step)
    report["robot_linear"] = _relative_error(robot_linear_jacobian(psi, geom), fd_robot)

    def shape_map(x: np.ndarray) -> np.ndarray:
        return shape_map_unchecked(ActuationQ.from_array(x), params).as_array()

    fd_q = _fd_columns(shape_map, q.as_array(), step)
    report["actuation"] = _relative_error(actuation_jacobian(q, params), fd_q)
    return report
