"""Kinematics, estimation, and control for a two-segment tendon robot.

The core is a constant-curvature model of a deflectable sheath with a
deflectable catheter running through it: forward kinematics, analytic
Jacobians, the handle-to-shape actuation map with its coupling term,
shape estimation from two 5-DoF sensor coils, and a resolved-rates
controller. A simulated plant with parameter mismatch, backlash, and
sensor noise drives the path-following experiments; ``cathkin.service``
and ``cathkin.cli`` expose the stack over HTTP and the command line.
"""

__version__ = "0.1.0"

from .actuation import (
    ActuationLimits,
    ActuationParams,
    ActuationQ,
    CalibrationResult,
    CalibrationSample,
    IdentifiabilityError,
    actuation_to_shape,
    calibrate,
    shape_to_actuation,
)
from .config import ConfigError, ExperimentConfig, build_config, load_config, parse_config
from .control import (
    SCHEMES,
    ControlConfig,
    Controller,
    CycleLog,
    PlantAbort,
    WaypointResult,
    solve_model_ik,
)
from .estimation import (
    CoilReading,
    FitResult,
    FitSettings,
    FitWeights,
    ShapeEstimator,
    fit_shape,
)
from .experiment import ExperimentOutcome, run_experiment, write_outputs
from .jacobians import (
    actuation_jacobian,
    control_jacobian,
    damped_pinv,
    finite_difference_report,
    robot_linear_jacobian,
    segment_jacobian,
)
from .kinematics import ConfigPsi, RobotGeometry, coil_fk, full_fk, segment_fk
from .paths import PathSpec, decompose_error, generate_path
from .plant import PlantConfig, PlantFault, TendonPlant
from .reporting import PathReport, build_report

__all__ = [
    "__version__",
    "ActuationLimits",
    "ActuationParams",
    "ActuationQ",
    "CalibrationResult",
    "CalibrationSample",
    "CoilReading",
    "ConfigError",
    "ConfigPsi",
    "ControlConfig",
    "Controller",
    "CycleLog",
    "ExperimentConfig",
    "ExperimentOutcome",
    "FitResult",
    "FitSettings",
    "FitWeights",
    "IdentifiabilityError",
    "PathReport",
    "PathSpec",
    "PlantAbort",
    "PlantConfig",
    "PlantFault",
    "RobotGeometry",
    "SCHEMES",
    "ShapeEstimator",
    "TendonPlant",
    "WaypointResult",
    "actuation_jacobian",
    "actuation_to_shape",
    "build_config",
    "build_report",
    "calibrate",
    "coil_fk",
    "control_jacobian",
    "damped_pinv",
    "decompose_error",
    "finite_difference_report",
    "fit_shape",
    "full_fk",
    "generate_path",
    "load_config",
    "parse_config",
    "robot_linear_jacobian",
    "run_experiment",
    "segment_fk",
    "segment_jacobian",
    "shape_to_actuation",
    "solve_model_ik",
    "write_outputs",
]
