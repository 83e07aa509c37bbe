"""Online shape estimation from two sparse pose sensors.

Each segment carries one 5-DoF sensing coil reporting position and
tangent direction (no roll). The shape vector is recovered by weighted
nonlinear least squares against the forward model: minimize

    sum_i  w_pi ||p_i(psi) - p_bar_i||^2 + w_ti ||t_i(psi) - t_bar_i||^2

over psi, warm-started from the previous estimate. The solver is a
damped Gauss-Newton iteration with box projection; 5-DoF coils leave
the plane angles weakly observable near straight configurations, which
the warm start, bounds, and the hold-last-good fallback absorb.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .jacobians import coil_jacobians
from .kinematics import THETA_MAX, ConfigPsi, RobotGeometry, coil_fk
from .transforms import skew

logger = logging.getLogger(__name__)

COIL_IDS = ("sheath", "catheter")


@dataclass(frozen=True)
class CoilReading:
    """One 5-DoF sensor sample: position (mm) and unit tangent."""

    position: np.ndarray
    tangent: np.ndarray
    coil_id: str
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        pos = np.array(self.position, dtype=float).reshape(3)
        tan = np.array(self.tangent, dtype=float).reshape(3)
        pos.setflags(write=False)
        tan.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "tangent", tan)

    def validate(self) -> None:
        if self.coil_id not in COIL_IDS:
            raise ValueError(f"coil_id must be one of {COIL_IDS}, got {self.coil_id!r}")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.tangent))):
            raise ValueError("coil reading contains non-finite values")
        norm = float(np.linalg.norm(self.tangent))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"tangent must be unit length, got norm {norm!r}")


@dataclass(frozen=True)
class FitWeights:
    """Residual weights: positions in mm^-2, tangents dimensionless.

    Defaults make a 0.2 rad tangent error cost about as much as a 1 mm
    position error. Zero disables a term (the fit may then be
    underdetermined; the solver still terminates).
    """

    w_p1: float = 1.0
    w_t1: float = 25.0
    w_p2: float = 1.0
    w_t2: float = 25.0

    def validate(self) -> None:
        vals = (self.w_p1, self.w_t1, self.w_p2, self.w_t2)
        if any(not math.isfinite(w) or w < 0.0 for w in vals):
            raise ValueError(f"weights must be nonnegative, got {vals}")
        if all(w == 0.0 for w in vals):
            raise ValueError("at least one weight must be positive")

    @staticmethod
    def coerce(value) -> "FitWeights":
        if isinstance(value, FitWeights):
            return value
        w_p1, w_t1, w_p2, w_t2 = (float(v) for v in value)
        return FitWeights(w_p1, w_t1, w_p2, w_t2)


@dataclass(frozen=True)
class FitBounds:
    """Box constraints on the shape vector during fitting."""

    theta_range: tuple[float, float] = (0.0, THETA_MAX)
    L1_range: tuple[float, float] = (5.0, 200.0)
    L2_range: tuple[float, float] = (5.0, 200.0)

    def validate(self) -> None:
        for name in ("theta_range", "L1_range", "L2_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name}={getattr(self, name)} is not a valid range")
        if self.theta_range[0] < 0.0 or self.theta_range[1] > THETA_MAX:
            raise ValueError(f"theta_range must stay within [0, {THETA_MAX}]")
        if self.L1_range[0] <= 0.0 or self.L2_range[0] <= 0.0:
            raise ValueError("segment length bounds must be positive")

    def project(self, x: np.ndarray, geom: RobotGeometry) -> np.ndarray:
        """Clamp a raw shape vector into the box.

        Length floors are raised above the coil offsets so the partial
        arcs stay well defined throughout the iteration.
        """
        out = x.copy()
        out[0] = min(max(out[0], self.theta_range[0]), self.theta_range[1])
        out[3] = min(max(out[3], self.theta_range[0]), self.theta_range[1])
        lo1 = max(self.L1_range[0], geom.coil_offset1 + 1.0)
        lo2 = max(self.L2_range[0], geom.coil_offset2 + 1.0)
        out[1] = min(max(out[1], lo1), self.L1_range[1])
        out[4] = min(max(out[4], lo2), self.L2_range[1])
        return out


@dataclass(frozen=True)
class FitSettings:
    """Solver controls for fit_shape."""

    max_iterations: int = 150
    step_tol: float = 1e-10
    residual_tol: float = 1e-8
    cost_tol: float = 1e-8
    accept_residual: float = 5.0

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if (self.step_tol <= 0.0 or self.residual_tol < 0.0 or self.cost_tol < 0.0
                or self.accept_residual <= 0.0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one shape fit.

    residual is the mm-equivalent root of the weighted squared error.
    converged means the iteration reached a first-order stop (residual
    tolerance, vanishing step, or no descent at any damping) AND the
    residual is below the acceptance threshold. A fit that ran out of
    iterations while still moving, or that stopped at a minimum whose
    residual exceeds the threshold (a bad basin), reports
    converged=False with its best iterate.
    """

    psi: ConfigPsi
    residual: float
    converged: bool
    iterations: int


def _residual_vector(
    x: np.ndarray,
    readings: tuple[CoilReading, CoilReading],
    sw: np.ndarray,
    geom: RobotGeometry,
) -> np.ndarray:
    psi = ConfigPsi.from_array(x)
    c1, c2 = coil_fk(psi, geom)
    r = np.empty(12)
    r[0:3] = sw[0] * (c1.position - readings[0].position)
    r[3:6] = sw[1] * (c1.z_axis - readings[0].tangent)
    r[6:9] = sw[2] * (c2.position - readings[1].position)
    r[9:12] = sw[3] * (c2.z_axis - readings[1].tangent)
    return r


def _residual_jacobian(
    x: np.ndarray,
    readings: tuple[CoilReading, CoilReading],
    sw: np.ndarray,
    geom: RobotGeometry,
) -> np.ndarray:
    psi = ConfigPsi.from_array(x)
    c1, c2 = coil_fk(psi, geom)
    (jp1, jw1), (jp2, jw2) = coil_jacobians(psi, geom)
    jac = np.empty((12, 6))
    jac[0:3] = sw[0] * jp1
    jac[3:6] = sw[1] * (-skew(c1.z_axis) @ jw1)
    jac[6:9] = sw[2] * jp2
    jac[9:12] = sw[3] * (-skew(c2.z_axis) @ jw2)
    return jac


def _residual_jacobian_fd(
    x: np.ndarray,
    readings: tuple[CoilReading, CoilReading],
    sw: np.ndarray,
    geom: RobotGeometry,
    step: float = 1e-7,
) -> np.ndarray:
    jac = np.empty((12, 6))
    for j in range(6):
        hi, lo = x.copy(), x.copy()
        hi[j] += step
        lo[j] -= step
        jac[:, j] = (
            _residual_vector(hi, readings, sw, geom)
            - _residual_vector(lo, readings, sw, geom)
        ) / (2.0 * step)
    return jac


def fit_shape(
    readings: tuple[CoilReading, CoilReading],
    initial: ConfigPsi,
    weights=None,
    geom: RobotGeometry | None = None,
    bounds: FitBounds | None = None,
    settings: FitSettings | None = None,
) -> FitResult:
    """Recover the shape vector from the two coil readings.

    Damped Gauss-Newton with Marquardt diagonal scaling and box
    projection, warm-started at `initial`. Deterministic; never raises
    on numeric trouble once inputs pass validation - failures surface
    as converged=False with the best iterate found.
    """
    if len(readings) != 2:
        raise ValueError(f"expected exactly 2 readings, got {len(readings)}")
    readings[0].validate()
    readings[1].validate()
    if readings[0].coil_id == readings[1].coil_id:
        raise ValueError("need one reading per coil, got two for the same coil")
    if readings[0].coil_id == "catheter":
        readings = (readings[1], readings[0])
    initial.validate()
    w = FitWeights.coerce(weights) if weights is not None else FitWeights()
    w.validate()
    geom = geom if geom is not None else RobotGeometry()
    geom.validate()
    bounds = bounds if bounds is not None else FitBounds()
    bounds.validate()
    settings = settings if settings is not None else FitSettings()
    settings.validate()

    sw = np.sqrt(np.array([w.w_p1, w.w_t1, w.w_p2, w.w_t2]))
    x = bounds.project(initial.as_array(), geom)

    def finish(x, residual, converged, iterations):
        psi = ConfigPsi.from_array(x).normalized()
        converged = bool(converged and residual <= settings.accept_residual)
        return FitResult(psi=psi, residual=float(residual), converged=converged,
                         iterations=iterations)

    try:
        r = _residual_vector(x, readings, sw, geom)
    except Exception:
        logger.warning("shape fit could not evaluate the initial residual", exc_info=True)
        return FitResult(psi=initial.normalized(), residual=float("inf"),
                         converged=False, iterations=0)
    cost = float(r @ r)
    if not math.isfinite(cost):
        return FitResult(psi=initial.normalized(), residual=float("inf"),
                         converged=False, iterations=0)
    if math.sqrt(cost) <= settings.residual_tol:
        return finish(x, math.sqrt(cost), True, 0)

    lam = 1e-3
    iterations = 0
    for _ in range(settings.max_iterations):
        iterations += 1
        try:
            jac = _residual_jacobian(x, readings, sw, geom)
            if not np.all(np.isfinite(jac)):
                raise FloatingPointError("non-finite analytic Jacobian")
        except Exception:
            jac = _residual_jacobian_fd(x, readings, sw, geom)
        hess = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(hess).copy()
        floor = max(1e-9 * float(np.max(diag, initial=0.0)), 1e-12)
        diag[diag < floor] = floor

        accepted = False
        for _ in range(12):
            try:
                step = np.linalg.solve(hess + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = bounds.project(x + step, geom)
            moved = x_new - x
            try:
                r_new = _residual_vector(x_new, readings, sw, geom)
                cost_new = float(r_new @ r_new)
            except Exception:
                cost_new = float("inf")
            if math.isfinite(cost_new) and cost_new < cost:
                cost_drop = cost - cost_new
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            # no descent direction at any damping: a first-order stop,
            # same as a vanishing step; the residual gate decides quality
            return finish(x, math.sqrt(cost), True, iterations)
        if math.sqrt(cost) <= settings.residual_tol:
            return finish(x, math.sqrt(cost), True, iterations)
        if float(np.linalg.norm(moved)) < settings.step_tol:
            return finish(x, math.sqrt(cost), True, iterations)
        if cost_drop <= settings.cost_tol * cost:
            # progress has flattened out relative to the remaining cost
            return finish(x, math.sqrt(cost), True, iterations)

    return finish(x, math.sqrt(cost), False, iterations)


def fallback_policy(
    current: FitResult, previous: ConfigPsi, accept_residual: float = 5.0
) -> ConfigPsi:
    """Hold-last-good gate between the fitter and the controller.

    A fit is adopted only if it converged with an acceptable residual;
    anything else keeps the previous estimate and logs why.
    """
    if current.converged and current.residual <= accept_residual:
        return current.psi
    logger.warning(
        "shape fit rejected (converged=%s, residual=%.4g, limit=%.4g);"
        " holding previous estimate",
        current.converged, current.residual, accept_residual,
    )
    return previous


class ShapeEstimator:
    """Stateful wrapper: warm starts each fit from the last good shape.

    Single-owner object; the control loop is its only caller.
    """

    def __init__(
        self,
        initial: ConfigPsi,
        geom: RobotGeometry,
        weights: FitWeights | None = None,
        bounds: FitBounds | None = None,
        settings: FitSettings | None = None,
    ):
        initial.validate()
        self.geom = geom
        self.weights = weights if weights is not None else FitWeights()
        self.bounds = bounds if bounds is not None else FitBounds()
        self.settings = settings if settings is not None else FitSettings()
        self.psi = initial
        self.last_result: FitResult | None = None

    def update(self, readings: tuple[CoilReading, CoilReading]) -> ConfigPsi:
        result = fit_shape(
            readings,
            self.psi,
            weights=self.weights,
            geom=self.geom,
            bounds=self.bounds,
            settings=self.settings,
        )
        self.last_result = result
        self.psi = fallback_policy(result, self.psi, self.settings.accept_residual)
        return self.psi
