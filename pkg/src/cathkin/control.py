"""Resolved-rates task-space position control.

Each control cycle is synchronous: read the coils, form the shape
estimate the active scheme prescribes, take one damped pseudo-inverse
step toward the target, clip, command the plant. Three schemes share
the loop:

- open_loop: feedback and shape both come from the actuation model;
  sensors are read only for logging, never for control.
- closed_loop: measured tip feedback, model shape.
- closed_loop_fit: measured tip feedback, shape from the online fit
  with hold-last-good fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .actuation import (
    ActuationLimits,
    ActuationParams,
    ActuationQ,
    flip_negative_bends,
    geometry_for,
    shape_map_unchecked,
)
from .estimation import (
    CoilReading,
    FitBounds,
    FitSettings,
    FitWeights,
    ShapeEstimator,
)
from .jacobians import control_jacobian, damped_pinv, ln_coupling_term
from .kinematics import THETA_MAX, ConfigPsi, RobotGeometry, coil_fk
from .plant import PlantFault

SCHEMES = ("open_loop", "closed_loop", "closed_loop_fit")

# Bend headroom kept between the commanded model shape and the hard
# kinematic limit, so mismatch on the plant side cannot push the true
# shape over the edge.
_THETA_CAP = 0.98 * THETA_MAX


class PlantInterface(Protocol):
    """What the controller needs from a robot: command in, readings out."""

    def command(self, q: ActuationQ): ...

    def read_coils(self) -> tuple[CoilReading, CoilReading]: ...


@dataclass(frozen=True)
class ControlConfig:
    """Gains, budgets, and per-cycle actuator rate limits."""

    alpha: float = 0.5
    damping: float = 1e-2
    convergence_threshold: float = 1.0
    max_cycles_per_target: int = 20
    scheme: str = "closed_loop_fit"
    rate_limit_delta: float = 0.3
    rate_limit_beta: float = 5.0
    rate_limit_gamma: float = 0.2

    def validate(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.damping < 0.0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if self.convergence_threshold <= 0.0:
            raise ValueError(
                f"convergence_threshold must be positive, got {self.convergence_threshold}"
            )
        if self.max_cycles_per_target < 1:
            raise ValueError(
                f"max_cycles_per_target must be >= 1, got {self.max_cycles_per_target}"
            )
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        for name in ("rate_limit_delta", "rate_limit_beta", "rate_limit_gamma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def rate_limits(self) -> np.ndarray:
        d, b, g = self.rate_limit_delta, self.rate_limit_beta, self.rate_limit_gamma
        return np.array([d, b, g, d, b, g])


@dataclass(frozen=True)
class CycleLog:
    """One control cycle as the controller saw it."""

    waypoint_index: int
    cycle_index: int
    target: np.ndarray
    measured_tip: np.ndarray
    model_tip: np.ndarray
    psi_estimate: ConfigPsi
    q_command: ActuationQ
    converged: bool
    saturated: bool

    def __post_init__(self) -> None:
        for name in ("target", "measured_tip", "model_tip"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class WaypointResult:
    """Summary of one waypoint's tracking attempt."""

    waypoint_index: int
    target: np.ndarray
    converged: bool
    cycles_used: int
    final_error: float
    final_measured_tip: np.ndarray
    final_model_tip: np.ndarray

    def __post_init__(self) -> None:
        for name in ("target", "final_measured_tip", "final_model_tip"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


class PlantAbort(RuntimeError):
    """Plant exchange failed mid-run; partial logs are attached."""

    def __init__(self, message: str, logs: list[CycleLog]):
        super().__init__(message)
        self.logs = logs


def resolved_rates_step(
    target,
    tip_feedback,
    psi: ConfigPsi,
    q: ActuationQ,
    cfg: ControlConfig,
    params: ActuationParams,
    geom: RobotGeometry,
    limits: ActuationLimits | None = None,
    return_saturation: bool = False,
) -> np.ndarray:
    """One actuation-space update, clamped to per-cycle rate limits.

    delta_q = alpha * J^+ * (target - tip_feedback), with J the
    composite task Jacobian at (psi, q) plus the exposed-length
    coupling term.

    When the limit box is supplied, axes that the raw step would push
    past their bound are pinned there and the remaining axes re-solved,
    so a saturated axis does not leave its share of the motion
    misallocated to the others (anti-windup).
    """
    cfg.validate()
    target = np.asarray(target, dtype=float).reshape(3)
    tip_feedback = np.asarray(tip_feedback, dtype=float).reshape(3)
    error = target - tip_feedback
    if not np.all(np.isfinite(error)):
        raise ValueError("target and tip feedback must be finite")
    cj = control_jacobian(psi, q, params, geom)
    jac = cj.J + ln_coupling_term(psi, params, geom)
    rate = cfg.rate_limits()
    goal = cfg.alpha * error

    qa = q.as_array()
    dq = np.zeros(6)
    frozen = np.zeros(6, dtype=bool)
    for _ in range(6):
        free_jac = jac.copy()
        free_jac[:, frozen] = 0.0
        residual = goal - jac[:, frozen] @ dq[frozen]
        step = damped_pinv(free_jac, cfg.damping) @ residual
        dq = np.where(frozen, dq, np.clip(step, -rate, rate))
        if limits is None:
            break
        lo, hi = limits.as_arrays()
        cand = qa + dq
        newly = ~frozen & ((cand < lo - 1e-12) | (cand > hi + 1e-12))
        if not newly.any():
            break
        dq = np.where(newly, np.clip(cand, lo, hi) - qa, dq)
        frozen |= newly
    if return_saturation:
        return dq, bool(frozen.any())
    return dq


def clip_to_validity(
    q: ActuationQ, limits: ActuationLimits, params: ActuationParams
) -> tuple[ActuationQ, bool]:
    """Clamp a candidate command to the limit box and to knob ranges
    that keep the model shape within the bend cap.

    theta1 = k1 gamma1 bounds gamma1 directly; given gamma1 and the
    plane angles, theta2's validity is again a box in gamma2.
    """
    q, saturated = limits.clip(q)
    g1_hi = min(limits.gamma1[1], _THETA_CAP / params.k1)
    gamma1 = min(max(q.gamma1, limits.gamma1[0]), g1_hi)
    coupling = params.kc * params.k1 * gamma1 * math.cos(q.delta1 - q.delta2)
    g2_lo = max(limits.gamma2[0], (0.0 - coupling) / params.k2)
    g2_hi = min(limits.gamma2[1], (_THETA_CAP - coupling) / params.k2)
    gamma2 = min(max(q.gamma2, g2_lo), max(g2_lo, g2_hi))
    if gamma1 != q.gamma1 or gamma2 != q.gamma2:
        saturated = True
        q = ActuationQ(q.delta1, q.beta1, gamma1, q.delta2, q.beta2, gamma2)
    return q, saturated


def _model_tip(q: ActuationQ, params: ActuationParams, base_geom: RobotGeometry):
    psi = flip_negative_bends(shape_map_unchecked(q, params))
    geom = geometry_for(q, params, base_geom)
    return psi, geom, coil_fk(psi, geom)[1].position


def _ik_seeds(target, limits: ActuationLimits, extra: ActuationQ | None):
    """Deterministic warm starts: bend planes aimed at the target azimuth
    (catheter plane both aligned and opposed for S-shapes), a few bend
    magnitudes, insertions mid-range."""
    azimuth = math.atan2(float(target[1]), float(target[0]))
    beta1 = 0.5 * (limits.beta1[0] + limits.beta1[1])
    beta2 = 0.5 * (limits.beta2[0] + limits.beta2[1])
    seeds = [] if extra is None else [extra]
    for gamma1 in (0.3, 0.8, 1.3):
        for gamma2 in (0.3, 0.9):
            for plane2 in (azimuth, azimuth + math.pi):
                raw = ActuationQ(azimuth, beta1, gamma1, plane2, beta2, gamma2)
                seeds.append(limits.clip(raw)[0])
    return seeds


def solve_model_ik(
    target,
    params: ActuationParams,
    base_geom: RobotGeometry,
    limits: ActuationLimits,
    seed: ActuationQ | None = None,
    max_cycles: int = 150,
    tol: float = 0.05,
) -> tuple[ActuationQ, float]:
    """Find a command whose model tip reaches the target, by iterated
    resolved-rates steps on the forward model (no plant involved).

    Deterministic: fixed warm-start list, best result wins. Returns the
    best (q, tip error in mm) found even when the target is out of
    reach.
    """
    target = np.asarray(target, dtype=float).reshape(3)
    # looser per-iteration motion than the physical controller: this is
    # an offline solve, not a hardware command stream
    cfg = ControlConfig(
        alpha=0.7,
        rate_limit_delta=0.6,
        rate_limit_beta=8.0,
        rate_limit_gamma=0.4,
    )
    best_q, best_err = None, math.inf
    for start in _ik_seeds(target, limits, seed):
        q = start
        stale = 0
        local_best = math.inf
        for _ in range(max_cycles):
            psi, geom, tip = _model_tip(q, params, base_geom)
            err = float(np.linalg.norm(target - tip))
            if err < best_err:
                best_q, best_err = q, err
            if err < local_best - 1e-6:
                local_best, stale = err, 0
            else:
                stale += 1
                if stale > 25:
                    break
            if best_err < tol:
                return best_q, best_err
            dq = resolved_rates_step(target, tip, psi, q, cfg, params, geom, limits)
            q, _ = clip_to_validity(
                ActuationQ.from_array(q.as_array() + dq), limits, params
            )
    return best_q, best_err


class Controller:
    """Owns the actuation state, the estimator, and the control loop.

    Single-threaded, single plant; per-waypoint state (current q, last
    shape estimate) carries over between waypoints on purpose.
    """

    def __init__(
        self,
        params: ActuationParams,
        base_geom: RobotGeometry,
        cfg: ControlConfig,
        limits: ActuationLimits,
        q0: ActuationQ,
        fit_weights: FitWeights | None = None,
        fit_bounds: FitBounds | None = None,
        fit_settings: FitSettings | None = None,
    ):
        params.validate()
        base_geom.validate()
        cfg.validate()
        limits.validate()
        q0.validate()
        if not limits.contains(q0):
            raise ValueError("initial command q0 violates the actuation limits")
        self.params = params
        self.base_geom = base_geom
        self.cfg = cfg
        self.limits = limits
        self.q = q0
        psi0 = self.model_shape(q0)
        self.estimator = ShapeEstimator(
            psi0,
            geometry_for(q0, params, base_geom),
            weights=fit_weights,
            bounds=fit_bounds,
            settings=fit_settings,
        )

    def model_shape(self, q: ActuationQ) -> ConfigPsi:
        """Model-predicted shape at q, canonicalized to theta >= 0."""
        return flip_negative_bends(shape_map_unchecked(q, self.params))

    def clip_command(self, q: ActuationQ) -> tuple[ActuationQ, bool]:
        return clip_to_validity(q, self.limits, self.params)

    def track_target(
        self, target, plant: PlantInterface, waypoint_index: int = 0
    ) -> tuple[bool, int, list[CycleLog]]:
        """Drive the plant toward one target point.

        Runs up to max_cycles_per_target command cycles, reading the
        coils once more after the last command so every log row pairs a
        command with its outcome. Returns (converged, commands issued,
        logs); at least one log row is always produced.
        """
        target = np.asarray(target, dtype=float).reshape(3)
        cfg = self.cfg
        logs: list[CycleLog] = []
        cycles_used = 0
        converged = False
        saturated = False

        for cycle_index in range(cfg.max_cycles_per_target + 1):
            try:
                readings = plant.read_coils()
            except PlantFault as exc:
                raise PlantAbort(f"coil read failed: {exc}", logs) from exc
            geom = geometry_for(self.q, self.params, self.base_geom)
            psi_model = self.model_shape(self.q)

            if cfg.scheme == "open_loop":
                psi_ctrl = psi_model
                tip_feedback = coil_fk(psi_model, geom)[1].position
            elif cfg.scheme == "closed_loop":
                psi_ctrl = psi_model
                tip_feedback = readings[1].position
            else:
                self.estimator.geom = geom
                psi_ctrl = self.estimator.update(readings)
                tip_feedback = readings[1].position

            model_tip = coil_fk(psi_ctrl, geom)[1].position
            error = float(np.linalg.norm(target - tip_feedback))
            hit = error < cfg.convergence_threshold
            logs.append(
                CycleLog(
                    waypoint_index=waypoint_index,
                    cycle_index=cycle_index,
                    target=target,
                    measured_tip=readings[1].position,
                    model_tip=model_tip,
                    psi_estimate=psi_ctrl,
                    q_command=self.q,
                    converged=hit,
                    saturated=saturated,
                )
            )
            if hit:
                converged = True
                break
            if cycles_used >= cfg.max_cycles_per_target:
                break

            dq, pinned = resolved_rates_step(
                target, tip_feedback, psi_ctrl, self.q, cfg, self.params, geom,
                limits=self.limits, return_saturation=True,
            )
            q_new, saturated = self.clip_command(
                ActuationQ.from_array(self.q.as_array() + dq)
            )
            saturated = saturated or pinned
            try:
                plant.command(q_new)
            except PlantFault as exc:
                raise PlantAbort(f"command rejected: {exc}", logs) from exc
            self.q = q_new
            cycles_used += 1

        return converged, cycles_used, logs

    def follow_path(
        self, waypoints, plant: PlantInterface
    ) -> tuple[list[WaypointResult], list[CycleLog]]:
        """Track each waypoint in order, carrying state between them.

        Budget exhaustion moves on to the next waypoint; only plant
        faults abort (with partial logs attached to the exception).
        """
        waypoints = np.asarray(waypoints, dtype=float)
        if waypoints.ndim != 2 or waypoints.shape[1] != 3 or waypoints.shape[0] < 1:
            raise ValueError(
                f"waypoints must be an (n, 3) array with n >= 1, got shape {waypoints.shape}"
            )
        results: list[WaypointResult] = []
        all_logs: list[CycleLog] = []
        for index, target in enumerate(waypoints):
            try:
                converged, cycles_used, logs = self.track_target(target, plant, index)
            except PlantAbort as exc:
                exc.logs = all_logs + exc.logs
                raise
            all_logs.extend(logs)
            last = logs[-1]
            results.append(
                WaypointResult(
                    waypoint_index=index,
                    target=target,
                    converged=converged,
                    cycles_used=cycles_used,
                    final_error=float(np.linalg.norm(target - last.measured_tip)),
                    final_measured_tip=last.measured_tip,
                    final_model_tip=last.model_tip,
                )
            )
        return results, all_logs
