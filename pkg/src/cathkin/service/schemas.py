"""Request and response bodies for the HTTP endpoints.

Every request can carry the experiment configuration, either as an
inline nested mapping (``config``) or as raw YAML text (``config_yaml``,
what the CLI sends after reading ``--config``). Omitting both runs on
library defaults. Vector-valued fields are plain lists; q is ordered
(delta1, beta1, gamma1, delta2, beta2, gamma2) and psi is ordered
(theta1, L1, delta1, theta2, L2, delta2), angles in radians and lengths
in mm throughout.
"""

from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Vec3 = Annotated[list[float], Field(min_length=3, max_length=3)]
Vec6 = Annotated[list[float], Field(min_length=6, max_length=6)]
Mat3 = Annotated[list[Vec3], Field(min_length=3, max_length=3)]


class ConfiguredRequest(BaseModel):
    """Base for requests that resolve an experiment config server-side."""

    model_config = ConfigDict(extra="forbid")

    config: dict | None = None
    config_yaml: str | None = None

    @model_validator(mode="after")
    def _single_source(self):
        if self.config is not None and self.config_yaml is not None:
            raise ValueError("give config or config_yaml, not both")
        return self


class PsiOut(BaseModel):
    theta1: float
    L1: float
    delta1: float
    theta2: float
    L2: float
    delta2: float


class CoilOut(BaseModel):
    position: Vec3
    tangent: Vec3


class FkRequest(ConfiguredRequest):
    """Forward kinematics of one configuration.

    Give a handle command q or a shape psi; with neither, the config's
    home command is evaluated.
    """

    q: Vec6 | None = None
    psi: Vec6 | None = None

    @model_validator(mode="after")
    def _single_input(self):
        if self.q is not None and self.psi is not None:
            raise ValueError("give q or psi, not both")
        return self


class FkResponse(BaseModel):
    psi: PsiOut
    exposed_length: float
    tip_position: Vec3
    tip_rotation: Mat3
    sheath_coil: CoilOut
    catheter_coil: CoilOut


class JacobianCheckRequest(ConfiguredRequest):
    """Compare the analytic Jacobians against central finite differences.

    With q and/or psi given, checks that single configuration (a missing
    psi is derived from q through the model). Otherwise sweeps n_samples
    random configurations drawn deterministically from seed.
    """

    q: Vec6 | None = None
    psi: Vec6 | None = None
    n_samples: int = Field(default=100, ge=1, le=20000)
    seed: int = 0
    step: float = Field(default=1e-6, gt=0)
    tolerance: float = Field(default=1e-5, gt=0)


class JacobianCheckResponse(BaseModel):
    n_configurations: int
    worst: dict[str, float]
    max_relative_error: float
    tolerance: float
    passed: bool


class CalibrationSampleIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: Vec6
    theta1: float
    theta2: float


class CalibrateRequest(ConfiguredRequest):
    samples: list[CalibrationSampleIn] = Field(min_length=4)


class CalibrateResponse(BaseModel):
    k1: float
    k2: float
    kc: float
    residual_rms_theta1: float
    residual_rms_theta2: float
    max_residual: float
    n_samples: int


class CoilReadingIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    position: Vec3
    tangent: Vec3
    coil_id: Literal["sheath", "catheter"]
    timestamp: float = 0.0


class FitShapeRequest(ConfiguredRequest):
    """Shape estimate from one sheath and one catheter coil reading.

    The warm start defaults to the model shape at the config's home
    command; exposed_length overrides the straight inner-body length
    assumed between the segments.
    """

    readings: list[CoilReadingIn] = Field(min_length=2, max_length=2)
    initial: Vec6 | None = None
    exposed_length: float | None = Field(default=None, ge=0)


class FitShapeResponse(BaseModel):
    psi: PsiOut
    residual: float
    converged: bool
    iterations: int


class FollowPathRequest(ConfiguredRequest):
    """Run the path-following experiment; seed and schemes override the
    config when given."""

    seed: int | None = None
    schemes: list[str] | None = None


class FollowPathResponse(BaseModel):
    seed: int
    schemes: list[str]
    summaries: dict[str, dict[str, float]]
    files: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
