"""Experiment configuration: YAML in, typed dataclasses out.

The file is a nested mapping; every section is optional and falls back to
library defaults. Units match the rest of the package (mm, rad). Parse and
validation failures raise ConfigError naming the offending field with a
dotted path like ``plant.backlash_width``.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .actuation import ActuationLimits, ActuationParams, ActuationQ
from .control import SCHEMES, ControlConfig
from .estimation import FitSettings, FitWeights
from .kinematics import RobotGeometry
from .paths import PathSpec
from .plant import PlantConfig


class ConfigError(ValueError):
    """Bad or missing configuration value. ``field`` is the dotted path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


START_MODES = ("first_waypoint", "home")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved inputs for one experiment run."""

    seed: int
    schemes: tuple[str, ...]
    start: str
    params: ActuationParams
    geometry: RobotGeometry
    limits: ActuationLimits
    control: ControlConfig
    home: ActuationQ
    plant: PlantConfig
    path: PathSpec
    fit_weights: FitWeights
    fit_settings: FitSettings

    def with_seed(self, seed: int) -> "ExperimentConfig":
        plant = dataclasses.replace(self.plant, rng_seed=seed)
        return dataclasses.replace(self, seed=seed, plant=plant)

    def with_schemes(self, schemes: tuple[str, ...]) -> "ExperimentConfig":
        for s in schemes:
            if s not in SCHEMES:
                raise ConfigError("schemes", f"unknown scheme {s!r}")
        if not schemes:
            raise ConfigError("schemes", "at least one scheme is required")
        return dataclasses.replace(self, schemes=tuple(schemes))


def _mapping(data, field: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(field, f"expected a mapping, got {type(data).__name__}")
    return data


def _reject_unknown(data: dict, allowed, field: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{field}.{key}" if field else str(key), "unknown key")


def _float(data: dict, key: str, default: float, field: str) -> float:
    val = data.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{field}.{key}", f"expected a number, got {val!r}")
    return float(val)


def _int(data: dict, key: str, default: int, field: str) -> int:
    val = data.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{field}.{key}", f"expected an integer, got {val!r}")
    return val


def _bool(data: dict, key: str, default: bool, field: str) -> bool:
    val = data.get(key, default)
    if not isinstance(val, bool):
        raise ConfigError(f"{field}.{key}", f"expected true/false, got {val!r}")
    return val


def _pair(data: dict, key: str, default: tuple[float, float], field: str) -> tuple[float, float]:
    val = data.get(key)
    if val is None:
        return default
    if not isinstance(val, (list, tuple)) or len(val) != 2:
        raise ConfigError(f"{field}.{key}", f"expected [lo, hi], got {val!r}")
    try:
        return (float(val[0]), float(val[1]))
    except (TypeError, ValueError):
        raise ConfigError(f"{field}.{key}", f"expected numeric [lo, hi], got {val!r}")


def _vec3(data: dict, key: str, default, field: str) -> np.ndarray:
    val = data.get(key)
    if val is None:
        return np.asarray(default, dtype=float)
    if not isinstance(val, (list, tuple)) or len(val) != 3:
        raise ConfigError(f"{field}.{key}", f"expected [x, y, z], got {val!r}")
    try:
        return np.array([float(v) for v in val])
    except (TypeError, ValueError):
        raise ConfigError(f"{field}.{key}", f"expected numeric [x, y, z], got {val!r}")


def _validated(obj, field: str):
    try:
        obj.validate()
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(field, str(err)) from err
    return obj


def _build_params(data: dict, field: str, base: ActuationParams | None = None) -> ActuationParams:
    base = base if base is not None else ActuationParams()
    allowed = {f.name for f in dataclasses.fields(ActuationParams)}
    _reject_unknown(data, allowed, field)
    kwargs = {}
    for f in dataclasses.fields(ActuationParams):
        if f.name == "ln_coupled":
            kwargs[f.name] = _bool(data, f.name, base.ln_coupled, field)
        else:
            kwargs[f.name] = _float(data, f.name, getattr(base, f.name), field)
    return _validated(ActuationParams(**kwargs), field)


def _build_geometry(data: dict, field: str, base: RobotGeometry | None = None) -> RobotGeometry:
    base = base if base is not None else RobotGeometry()
    allowed = {f.name for f in dataclasses.fields(RobotGeometry)}
    _reject_unknown(data, allowed, field)
    kwargs = {
        f.name: _float(data, f.name, getattr(base, f.name), field)
        for f in dataclasses.fields(RobotGeometry)
    }
    return _validated(RobotGeometry(**kwargs), field)


def _build_limits(data: dict, field: str) -> ActuationLimits:
    base = ActuationLimits()
    allowed = {f.name for f in dataclasses.fields(ActuationLimits)}
    _reject_unknown(data, allowed, field)
    kwargs = {
        f.name: _pair(data, f.name, getattr(base, f.name), field)
        for f in dataclasses.fields(ActuationLimits)
    }
    return _validated(ActuationLimits(**kwargs), field)


def _build_control(data: dict, field: str) -> ControlConfig:
    if "scheme" in data:
        raise ConfigError(f"{field}.scheme", "set top-level 'schemes' instead")
    base = ControlConfig()
    allowed = {f.name for f in dataclasses.fields(ControlConfig)} - {"scheme"}
    _reject_unknown(data, allowed, field)
    kwargs = {}
    for f in dataclasses.fields(ControlConfig):
        if f.name == "scheme":
            continue
        if f.name == "max_cycles_per_target":
            kwargs[f.name] = _int(data, f.name, base.max_cycles_per_target, field)
        else:
            kwargs[f.name] = _float(data, f.name, getattr(base, f.name), field)
    return _validated(ControlConfig(**kwargs), field)


def _build_home(data: dict, field: str) -> ActuationQ:
    base = ActuationQ(delta1=0.0, beta1=10.0, gamma1=0.6, delta2=0.0, beta2=20.0, gamma2=0.8)
    allowed = {f.name for f in dataclasses.fields(ActuationQ)}
    _reject_unknown(data, allowed, field)
    kwargs = {
        f.name: _float(data, f.name, getattr(base, f.name), field)
        for f in dataclasses.fields(ActuationQ)
    }
    return _validated(ActuationQ(**kwargs), field)


def _build_path(data: dict, field: str) -> PathSpec:
    base = PathSpec()
    allowed = {"kind", "center", "normal", "radius", "n_points", "direction", "start_phase"}
    _reject_unknown(data, allowed, field)
    kind = data.get("kind", base.kind)
    if not isinstance(kind, str):
        raise ConfigError(f"{field}.kind", f"expected a string, got {kind!r}")
    direction = data.get("direction", base.direction)
    if not isinstance(direction, str):
        raise ConfigError(f"{field}.direction", f"expected a string, got {direction!r}")
    normal = _vec3(data, "normal", base.normal, field)
    norm = float(np.linalg.norm(normal))
    if norm < 1e-12:
        raise ConfigError(f"{field}.normal", "normal must be nonzero")
    spec = PathSpec(
        kind=kind,
        center=_vec3(data, "center", base.center, field),
        normal=normal / norm,
        radius=_float(data, "radius", base.radius, field),
        n_points=_int(data, "n_points", base.n_points, field),
        direction=direction,
        start_phase=_float(data, "start_phase", base.start_phase, field),
    )
    return _validated(spec, field)


def _build_plant(data: dict, field: str, model_params: ActuationParams,
                 model_geom: RobotGeometry, limits: ActuationLimits,
                 seed: int) -> PlantConfig:
    allowed = {
        "params", "geometry", "backlash_width", "sensor_noise_sigma_pos",
        "sensor_noise_sigma_tangent", "curvature_distortion",
        "registration_translation", "registration_rotation",
    }
    _reject_unknown(data, allowed, field)
    # plant truth defaults to the controller's model; overrides create mismatch
    true_params = _build_params(_mapping(data.get("params"), f"{field}.params"),
                                f"{field}.params", base=model_params)
    true_geom = _build_geometry(_mapping(data.get("geometry"), f"{field}.geometry"),
                                f"{field}.geometry", base=model_geom)
    cfg = PlantConfig(
        true_params=true_params,
        true_geom=true_geom,
        limits=limits,
        backlash_width=_float(data, "backlash_width", 0.0, field),
        sensor_noise_sigma_pos=_float(data, "sensor_noise_sigma_pos", 0.0, field),
        sensor_noise_sigma_tangent=_float(data, "sensor_noise_sigma_tangent", 0.0, field),
        curvature_distortion=_float(data, "curvature_distortion", 0.0, field),
        registration_translation=_float(data, "registration_translation", 0.0, field),
        registration_rotation=_float(data, "registration_rotation", 0.0, field),
        rng_seed=seed,
    )
    return _validated(cfg, field)


def _build_weights(data: dict, field: str) -> FitWeights:
    base = FitWeights()
    allowed = {f.name for f in dataclasses.fields(FitWeights)}
    _reject_unknown(data, allowed, field)
    kwargs = {
        f.name: _float(data, f.name, getattr(base, f.name), field)
        for f in dataclasses.fields(FitWeights)
    }
    return _validated(FitWeights(**kwargs), field)


def _build_fit_settings(data: dict, field: str) -> FitSettings:
    base = FitSettings()
    allowed = {f.name for f in dataclasses.fields(FitSettings)}
    _reject_unknown(data, allowed, field)
    kwargs = {}
    for f in dataclasses.fields(FitSettings):
        if f.name == "max_iterations":
            kwargs[f.name] = _int(data, f.name, base.max_iterations, field)
        else:
            kwargs[f.name] = _float(data, f.name, getattr(base, f.name), field)
    return _validated(FitSettings(**kwargs), field)


_TOP_KEYS = (
    "seed", "schemes", "start", "params", "geometry", "limits", "control",
    "home", "plant", "path", "fit",
)


def parse_config(text: str) -> ExperimentConfig:
    """Build an ExperimentConfig from YAML text."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("<document>", f"not valid YAML: {err}") from err
    return build_config(data)


def build_config(data) -> ExperimentConfig:
    """Build an ExperimentConfig from an already-parsed nested mapping."""
    data = _mapping(data, "<document>")
    _reject_unknown(data, _TOP_KEYS, "")

    seed = _int(data, "seed", 0, "<top>")
    schemes = data.get("schemes", ["closed_loop_fit"])
    if isinstance(schemes, str):
        schemes = [schemes]
    if not isinstance(schemes, list) or not schemes:
        raise ConfigError("schemes", f"expected a nonempty list, got {schemes!r}")
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError("schemes", f"unknown scheme {s!r} (choose from {SCHEMES})")
    if len(set(schemes)) != len(schemes):
        raise ConfigError("schemes", "duplicate scheme names")

    start = data.get("start", "first_waypoint")
    if start not in START_MODES:
        raise ConfigError("start", f"expected one of {START_MODES}, got {start!r}")

    params = _build_params(_mapping(data.get("params"), "params"), "params")
    geometry = _build_geometry(_mapping(data.get("geometry"), "geometry"), "geometry")
    limits = _build_limits(_mapping(data.get("limits"), "limits"), "limits")
    control = _build_control(_mapping(data.get("control"), "control"), "control")
    home = _build_home(_mapping(data.get("home"), "home"), "home")
    path = _build_path(_mapping(data.get("path"), "path"), "path")
    plant = _build_plant(_mapping(data.get("plant"), "plant"), "plant",
                         params, geometry, limits, seed)
    fit = _mapping(data.get("fit"), "fit")
    _reject_unknown(fit, {"weights", "settings"}, "fit")
    weights = _build_weights(_mapping(fit.get("weights"), "fit.weights"), "fit.weights")
    settings = _build_fit_settings(_mapping(fit.get("settings"), "fit.settings"), "fit.settings")

    if not limits.contains(home):
        raise ConfigError("home", "home position violates actuation limits")

    return ExperimentConfig(
        seed=seed,
        schemes=tuple(schemes),
        start=start,
        params=params,
        geometry=geometry,
        limits=limits,
        control=control,
        home=home,
        plant=plant,
        path=path,
        fit_weights=weights,
        fit_settings=settings,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and parse a YAML config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError("<file>", f"cannot read {p}: {err}") from err
    return parse_config(text)
