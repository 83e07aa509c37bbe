"""HTTP service wrapping the library.

Five POST endpoints mirror the CLI subcommands: forward kinematics,
Jacobian self-check, gain calibration, shape fitting, and the full
path-following experiment. Handlers are synchronous on purpose (the
work is CPU-bound numerics; FastAPI moves them off the event loop) and
hold no state between requests.

Error mapping: bad configuration or domain values answer 422 with a
structured detail naming the offending field or parameter; a plant
fault mid-experiment answers 409.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..actuation import (
    ActuationQ,
    CalibrationSample,
    IdentifiabilityError,
    calibrate,
    flip_negative_bends,
    geometry_for,
    shape_map_unchecked,
)
from ..config import ConfigError, ExperimentConfig, build_config, parse_config
from ..control import PlantAbort
from ..estimation import CoilReading, fit_shape
from ..experiment import run_experiment
from ..jacobians import finite_difference_report
from ..kinematics import ConfigPsi, coil_fk, full_fk
from ..plant import PlantFault
from .schemas import (
    CalibrateRequest,
    CalibrateResponse,
    CoilOut,
    FitShapeRequest,
    FitShapeResponse,
    FkRequest,
    FkResponse,
    FollowPathRequest,
    FollowPathResponse,
    HealthResponse,
    JacobianCheckRequest,
    JacobianCheckResponse,
    PsiOut,
)


def _resolve_config(req) -> ExperimentConfig:
    if req.config_yaml is not None:
        return parse_config(req.config_yaml)
    return build_config(req.config if req.config is not None else {})


def _psi_out(psi: ConfigPsi) -> PsiOut:
    return PsiOut(
        theta1=psi.theta1, L1=psi.L1, delta1=psi.delta1,
        theta2=psi.theta2, L2=psi.L2, delta2=psi.delta2,
    )


def _coil_out(pose) -> CoilOut:
    return CoilOut(
        position=[float(v) for v in pose.position],
        tangent=[float(v) for v in pose.z_axis],
    )


def _fk_inputs(req: FkRequest, cfg: ExperimentConfig):
    """Shape and geometry to evaluate: explicit psi, explicit q, or the
    config home. Commands run through the model with negative coupled
    bends rewritten to the canonical far-side form."""
    if req.psi is not None:
        psi = ConfigPsi.from_array(req.psi)
        psi.validate()
        return psi, cfg.geometry
    q = ActuationQ.from_array(req.q) if req.q is not None else cfg.home
    q.validate()
    psi = flip_negative_bends(shape_map_unchecked(q, cfg.params))
    psi.validate()
    return psi, geometry_for(q, cfg.params, cfg.geometry)


def _check_points(req: JacobianCheckRequest, cfg: ExperimentConfig):
    if req.q is not None or req.psi is not None:
        q = ActuationQ.from_array(req.q) if req.q is not None else cfg.home
        q.validate()
        if req.psi is not None:
            psi = ConfigPsi.from_array(req.psi)
        else:
            psi = flip_negative_bends(shape_map_unchecked(q, cfg.params))
        psi.validate()
        return [(psi, q)]
    # sweep: bends kept away from zero and the hard cap where finite
    # differences themselves degrade
    rng = np.random.default_rng(req.seed)
    lo, hi = cfg.limits.as_arrays()
    points = []
    for _ in range(req.n_samples):
        theta = rng.uniform(0.05, 2.5, size=2)
        lengths = rng.uniform(40.0, 120.0, size=2)
        deltas = rng.uniform(-math.pi, math.pi, size=2)
        psi = ConfigPsi(theta[0], lengths[0], deltas[0],
                        theta[1], lengths[1], deltas[1])
        points.append((psi, ActuationQ.from_array(rng.uniform(lo, hi))))
    return points


def create_app() -> FastAPI:
    app = FastAPI(
        title="cathkin",
        version=__version__,
        description="Constant-curvature kinematics, shape estimation, and"
                    " resolved-rates control for a two-segment tendon-driven"
                    " robot, with a simulated plant.",
    )

    @app.exception_handler(ConfigError)
    async def _config_error(request, exc: ConfigError):
        return JSONResponse(
            status_code=422,
            content={"detail": {"kind": "config", "field": exc.field,
                                "message": str(exc)}},
        )

    @app.exception_handler(IdentifiabilityError)
    async def _identifiability_error(request, exc: IdentifiabilityError):
        return JSONResponse(
            status_code=422,
            content={"detail": {"kind": "identifiability",
                                "parameter": exc.parameter,
                                "message": str(exc)}},
        )

    @app.exception_handler(ValueError)
    async def _value_error(request, exc: ValueError):
        return JSONResponse(
            status_code=422,
            content={"detail": {"kind": "value", "message": str(exc)}},
        )

    @app.exception_handler(PlantAbort)
    async def _plant_abort(request, exc: PlantAbort):
        return JSONResponse(
            status_code=409,
            content={"detail": {"kind": "plant", "message": str(exc),
                                "cycles_logged": len(exc.logs)}},
        )

    @app.exception_handler(PlantFault)
    async def _plant_fault(request, exc: PlantFault):
        return JSONResponse(
            status_code=409,
            content={"detail": {"kind": "plant", "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/fk", response_model=FkResponse)
    def fk(req: FkRequest) -> FkResponse:
        cfg = _resolve_config(req)
        psi, geom = _fk_inputs(req, cfg)
        tip = full_fk(psi, geom)
        sheath, catheter = coil_fk(psi, geom)
        return FkResponse(
            psi=_psi_out(psi),
            exposed_length=geom.Ln,
            tip_position=[float(v) for v in tip.position],
            tip_rotation=[[float(v) for v in row] for row in tip.rotation],
            sheath_coil=_coil_out(sheath),
            catheter_coil=_coil_out(catheter),
        )

    @app.post("/jacobian-check", response_model=JacobianCheckResponse)
    def jacobian_check(req: JacobianCheckRequest) -> JacobianCheckResponse:
        cfg = _resolve_config(req)
        points = _check_points(req, cfg)
        worst: dict[str, float] = {}
        for psi, q in points:
            report = finite_difference_report(
                psi, q, cfg.params, cfg.geometry, step=req.step
            )
            for key, val in report.items():
                worst[key] = max(worst.get(key, 0.0), val)
        max_err = max(worst.values())
        return JacobianCheckResponse(
            n_configurations=len(points),
            worst=worst,
            max_relative_error=max_err,
            tolerance=req.tolerance,
            passed=bool(max_err < req.tolerance),
        )

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate_gains(req: CalibrateRequest) -> CalibrateResponse:
        cfg = _resolve_config(req)
        samples = [
            CalibrationSample(q=ActuationQ.from_array(s.q),
                              theta1=s.theta1, theta2=s.theta2)
            for s in req.samples
        ]
        result = calibrate(samples, base_params=cfg.params)
        return CalibrateResponse(
            k1=result.params.k1,
            k2=result.params.k2,
            kc=result.params.kc,
            residual_rms_theta1=result.residual_rms_theta1,
            residual_rms_theta2=result.residual_rms_theta2,
            max_residual=result.max_residual,
            n_samples=result.n_samples,
        )

    @app.post("/fit-shape", response_model=FitShapeResponse)
    def fit_shape_once(req: FitShapeRequest) -> FitShapeResponse:
        cfg = _resolve_config(req)
        readings = tuple(
            CoilReading(position=np.array(r.position),
                        tangent=np.array(r.tangent),
                        coil_id=r.coil_id, timestamp=r.timestamp)
            for r in req.readings
        )
        geom = cfg.geometry
        if req.exposed_length is not None:
            geom = replace(geom, Ln=req.exposed_length)
        if req.initial is not None:
            initial = ConfigPsi.from_array(req.initial)
        else:
            initial = flip_negative_bends(shape_map_unchecked(cfg.home, cfg.params))
        result = fit_shape(
            readings, initial,
            weights=cfg.fit_weights, geom=geom, settings=cfg.fit_settings,
        )
        return FitShapeResponse(
            psi=_psi_out(result.psi),
            residual=result.residual,
            converged=result.converged,
            iterations=result.iterations,
        )

    @app.post("/follow-path", response_model=FollowPathResponse)
    def follow_path(req: FollowPathRequest) -> FollowPathResponse:
        cfg = _resolve_config(req)
        if req.seed is not None:
            cfg = cfg.with_seed(req.seed)
        if req.schemes is not None:
            cfg = cfg.with_schemes(tuple(req.schemes))
        outcome = run_experiment(cfg)
        return FollowPathResponse(
            seed=cfg.seed,
            schemes=list(cfg.schemes),
            summaries={r.scheme: r.aggregates for r in outcome.reports},
            files=outcome.rendered_files(),
        )

    return app
