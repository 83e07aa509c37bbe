"""Mapping between handle commands and robot shape, plus calibration.

The handle-level command vector q stacks, per device, the axial handle
rotation delta (rad), the insertion depth beta (mm), and the bending
knob angle gamma (rad), sheath first:

    q = [delta1, beta1, gamma1, delta2, beta2, gamma2]

The shape map is affine in the knob and insertion axes with one
nonlinear coupling term: sheath bending tugs the catheter tendon where
it passes through the sheath, deflecting the catheter by an amount
that scales with the cosine of the angle between the two bending
planes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .kinematics import THETA_MAX, ConfigPsi, RobotGeometry
from .transforms import wrap_angle

_Q_FIELDS = ("delta1", "beta1", "gamma1", "delta2", "beta2", "gamma2")

# Hard envelope of the insertion stage; configured limits may only
# narrow this.
BETA_ENVELOPE = (0.0, 50.0)


@dataclass(frozen=True)
class ActuationQ:
    """Handle commands: rotations in radians, insertions in mm."""

    delta1: float = 0.0
    beta1: float = 0.0
    gamma1: float = 0.0
    delta2: float = 0.0
    beta2: float = 0.0
    gamma2: float = 0.0

    def validate(self) -> None:
        for name in _Q_FIELDS:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not (BETA_ENVELOPE[0] <= v <= BETA_ENVELOPE[1]):
                raise ValueError(
                    f"{name}={v} outside insertion envelope {BETA_ENVELOPE} mm"
                )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in _Q_FIELDS])

    @staticmethod
    def from_array(q) -> "ActuationQ":
        vals = [float(x) for x in np.asarray(q).reshape(6)]
        return ActuationQ(*vals)


@dataclass(frozen=True)
class ActuationLimits:
    """Box limits on each command axis, as (low, high) pairs."""

    delta1: tuple[float, float] = (-3.0 * math.pi, 3.0 * math.pi)
    beta1: tuple[float, float] = (0.0, 25.0)
    gamma1: tuple[float, float] = (0.0, 2.0 * math.pi)
    delta2: tuple[float, float] = (-3.0 * math.pi, 3.0 * math.pi)
    beta2: tuple[float, float] = (15.0, 50.0)
    gamma2: tuple[float, float] = (0.0, 2.0 * math.pi)

    def validate(self) -> None:
        for name in _Q_FIELDS:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"limit {name}={getattr(self, name)} is not a valid range")
        for name in ("beta1", "beta2"):
            lo, hi = getattr(self, name)
            if lo < BETA_ENVELOPE[0] or hi > BETA_ENVELOPE[1]:
                raise ValueError(
                    f"limit {name}={getattr(self, name)} exceeds insertion envelope"
                    f" {BETA_ENVELOPE} mm"
                )

    def contains(self, q: ActuationQ) -> bool:
        return all(
            getattr(self, name)[0] <= getattr(q, name) <= getattr(self, name)[1]
            for name in _Q_FIELDS
        )

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(low, high) bound vectors in command order."""
        lo = np.array([getattr(self, name)[0] for name in _Q_FIELDS])
        hi = np.array([getattr(self, name)[1] for name in _Q_FIELDS])
        return lo, hi

    def clip(self, q: ActuationQ) -> tuple[ActuationQ, bool]:
        """Clamp q into the box; the flag reports whether anything moved."""
        clipped = {}
        saturated = False
        for name in _Q_FIELDS:
            lo, hi = getattr(self, name)
            v = min(max(getattr(q, name), lo), hi)
            if v != getattr(q, name):
                saturated = True
            clipped[name] = v
        return ActuationQ(**clipped), saturated


@dataclass(frozen=True)
class ActuationParams:
    """Identified constants of the handle-to-shape map.

    k1, k2 are knob-to-bend gains (rad/rad), kc the sheath-to-catheter
    coupling gain, b1, b2 the insertion-to-length offsets (mm), r1, r2
    the tendon offset radii (mm). cn is the exposed inner-body length
    at equal insertion; with ln_coupled the exposed length follows the
    relative insertion beta2 - beta1. l1, l2, l21 are reference tendon
    lengths recorded at the straight configuration; informational only.
    """

    k1: float = 0.5
    k2: float = 0.4
    kc: float = 0.15
    b1: float = 60.0
    b2: float = 35.0
    r1: float = 3.0
    r2: float = 1.5
    cn: float = 10.0
    ln_coupled: bool = True
    l1: float = 0.0
    l2: float = 0.0
    l21: float = 0.0

    def validate(self) -> None:
        if not (self.k1 > 0.0 and self.k2 > 0.0):
            raise ValueError(f"bend gains must be positive, got k1={self.k1}, k2={self.k2}")
        if self.b1 < 0.0 or self.b2 < 0.0:
            raise ValueError(f"length offsets must be nonnegative, got b1={self.b1}, b2={self.b2}")
        if not (self.r1 > 0.0 and self.r2 > 0.0):
            raise ValueError(f"tendon radii must be positive, got r1={self.r1}, r2={self.r2}")
        if not math.isfinite(self.kc):
            raise ValueError(f"kc must be finite, got {self.kc!r}")
        if not math.isfinite(self.cn) or self.cn < 0.0:
            raise ValueError(f"cn must be nonnegative, got {self.cn!r}")


def exposed_length(q: ActuationQ, params: ActuationParams) -> float:
    """Straight inner-body length between sheath tip and catheter bend.

    Inserting the catheter relative to the sheath exposes more of it;
    the fixed mode ignores insertion and always reports cn.
    """
    if not params.ln_coupled:
        return params.cn
    ln = params.cn + (q.beta2 - q.beta1)
    if ln < 0.0:
        raise ValueError(
            f"exposed length {ln:.3f} mm is negative; beta2 - beta1 = "
            f"{q.beta2 - q.beta1:.3f} mm under-runs cn = {params.cn:.3f} mm"
        )
    return ln


def geometry_for(
    q: ActuationQ, params: ActuationParams, base: RobotGeometry
) -> RobotGeometry:
    """Geometry snapshot at command q: exposed length varies, offsets don't."""
    return replace(base, Ln=exposed_length(q, params))


def shape_map_unchecked(q: ActuationQ, params: ActuationParams) -> ConfigPsi:
    """The raw handle-to-shape map, without any range validation.

    Used where out-of-range intermediate values must pass through
    (finite differencing, plant internals). Most callers want
    actuation_to_shape.
    """
    theta1 = params.k1 * q.gamma1
    theta2 = params.k2 * q.gamma2 + params.kc * theta1 * math.cos(q.delta1 - q.delta2)
    return ConfigPsi(
        theta1=theta1,
        L1=q.beta1 + params.b1,
        delta1=q.delta1,
        theta2=theta2,
        L2=q.beta2 + params.b2,
        delta2=q.delta2,
    )


def actuation_to_shape(q: ActuationQ, params: ActuationParams) -> ConfigPsi:
    """Shape predicted from handle commands.

    theta1 = k1 gamma1; theta2 = k2 gamma2 + kc theta1 cos(delta1 -
    delta2); L_i = beta_i + b_i; the plane angles carry over directly.
    Raises if the result leaves the valid shape range.
    """
    q.validate()
    params.validate()
    psi = shape_map_unchecked(q, params)
    psi.validate()
    return psi


def flip_negative_bends(psi: ConfigPsi) -> ConfigPsi:
    """Rewrite negative bend angles as positive bends on the far side.

    A bend of -theta at plane angle delta is the same arc as +theta at
    delta + pi, so this changes nothing geometrically; it keeps shapes
    inside the canonical theta >= 0 range when the coupling term drives
    the raw map negative.
    """
    theta1, delta1 = psi.theta1, psi.delta1
    theta2, delta2 = psi.theta2, psi.delta2
    if theta1 < 0.0:
        theta1, delta1 = -theta1, wrap_angle(delta1 + math.pi)
    if theta2 < 0.0:
        theta2, delta2 = -theta2, wrap_angle(delta2 + math.pi)
    return ConfigPsi(theta1, psi.L1, delta1, theta2, psi.L2, delta2)


def shape_to_actuation(psi: ConfigPsi, params: ActuationParams) -> ActuationQ:
    """Exact inverse of actuation_to_shape (the map is bijective in q)."""
    psi.validate()
    params.validate()
    gamma1 = psi.theta1 / params.k1
    coupling = params.kc * psi.theta1 * math.cos(psi.delta1 - psi.delta2)
    gamma2 = (psi.theta2 - coupling) / params.k2
    return ActuationQ(
        delta1=psi.delta1,
        beta1=psi.L1 - params.b1,
        gamma1=gamma1,
        delta2=psi.delta2,
        beta2=psi.L2 - params.b2,
        gamma2=gamma2,
    )


def tendon_displacement(psi: ConfigPsi, params: ActuationParams) -> tuple[float, float]:
    """Tendon pull for each segment's own tendon: d_i = r_i * theta_i."""
    psi.validate()
    return params.r1 * psi.theta1, params.r2 * psi.theta2


def coupled_tendon_displacement(psi: ConfigPsi, params: ActuationParams) -> float:
    """Extra catheter-tendon pull caused by sheath bending (diagnostic).

    The catheter tendon rides through the bent sheath at offset r2; the
    projection of that offset onto the sheath's bending plane sets the
    displacement.
    """
    return params.r2 * psi.theta1 * math.cos(psi.delta1 - psi.delta2)


class IdentifiabilityError(ValueError):
    """Calibration data does not excite a parameter enough to fit it."""

    def __init__(self, parameter: str, message: str):
        super().__init__(message)
        self.parameter = parameter


@dataclass(frozen=True)
class CalibrationSample:
    """One calibration record: command plus measured bending angles."""

    q: ActuationQ
    theta1: float
    theta2: float


@dataclass(frozen=True)
class CalibrationResult:
    params: ActuationParams
    residual_rms_theta1: float
    residual_rms_theta2: float
    max_residual: float
    n_samples: int


# Smallest normalized singular value of the design matrix we accept
# before declaring the catheter gains inseparable.
_MIN_NORMALIZED_SV = 1e-6


def calibrate(
    samples: list[CalibrationSample],
    base_params: ActuationParams | None = None,
) -> CalibrationResult:
    """Least-squares fit of the bend gains k1, k2, kc from angle data.

    The sheath gain comes first from theta1 = k1 gamma1; the catheter
    gains then come from a linear regression of theta2 on gamma2 and
    the measured coupling regressor theta1 cos(delta1 - delta2). Length
    offsets are not observable from angles and are carried over from
    base_params (see fit_length_offset).
    """
    if len(samples) < 4:
        raise ValueError(f"need at least 4 samples, got {len(samples)}")
    base = base_params if base_params is not None else ActuationParams()

    gamma1 = np.array([s.q.gamma1 for s in samples])
    gamma2 = np.array([s.q.gamma2 for s in samples])
    theta1 = np.array([s.theta1 for s in samples])
    theta2 = np.array([s.theta2 for s in samples])
    cosd = np.array([math.cos(s.q.delta1 - s.q.delta2) for s in samples])

    g1_energy = float(gamma1 @ gamma1)
    if g1_energy < 1e-12:
        raise IdentifiabilityError(
            "k1", "no sheath knob excitation in samples; k1 is unobservable"
        )
    k1 = float(gamma1 @ theta1) / g1_energy
    res1 = theta1 - k1 * gamma1

    design = np.column_stack([gamma2, theta1 * cosd])
    norms = np.linalg.norm(design, axis=0)
    if norms[0] < 1e-9:
        raise IdentifiabilityError(
            "k2", "no catheter knob excitation in samples; k2 is unobservable"
        )
    if norms[1] < 1e-9:
        raise IdentifiabilityError(
            "kc",
            "no coupled bending in samples (theta1 cos(delta1 - delta2) is"
            " always zero); kc is unobservable",
        )
    sv = np.linalg.svd(design / norms, compute_uv=False)
    if sv[-1] < _MIN_NORMALIZED_SV:
        raise IdentifiabilityError(
            "k2", "catheter design matrix is rank deficient; k2 and kc are"
            " not separable with these samples",
        )
    coef, _, _, _ = np.linalg.lstsq(design, theta2, rcond=None)
    k2, kc = (float(c) for c in coef)
    if k2 <= 0.0:
        raise IdentifiabilityError(
            "k2", f"fitted catheter gain k2={k2:.6g} is not positive; data is"
            " inconsistent with the bending model",
        )
    res2 = theta2 - design @ coef

    params = replace(base, k1=k1, k2=k2, kc=kc)
    params.validate()
    return CalibrationResult(
        params=params,
        residual_rms_theta1=float(np.sqrt(np.mean(res1**2))),
        residual_rms_theta2=float(np.sqrt(np.mean(res2**2))),
        max_residual=float(max(np.max(np.abs(res1)), np.max(np.abs(res2)))),
        n_samples=len(samples),
    )


def fit_length_offset(betas, lengths) -> tuple[float, float]:
    """Length offset b from straight-configuration measurements.

    L = beta + b with unit slope, so b is the mean of L - beta; the
    second value is the RMS residual of that fit.
    """
    betas = np.asarray(betas, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if betas.size == 0 or betas.shape != lengths.shape:
        raise ValueError("need matching, nonempty beta and length arrays")
    diffs = lengths - betas
    b = float(np.mean(diffs))
    return b, float(np.sqrt(np.mean((diffs - b) ** 2)))


def load_calibration_samples(path) -> list[CalibrationSample]:
    """Read calibration records from a text file.

    One record per line: eight whitespace-separated floats
    delta1 beta1 gamma1 delta2 beta2 gamma2 theta1 theta2.
    Blank lines and lines starting with '#' are skipped.
    """
    samples = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 8:
            raise ValueError(
                f"{path}:{lineno}: expected 8 values"
                f" (delta1 beta1 gamma1 delta2 beta2 gamma2 theta1 theta2),"
                f" got {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        samples.append(
            CalibrationSample(q=ActuationQ(*vals[:6]), theta1=vals[6], theta2=vals[7])
        )
    return samples


def save_calibration_samples(path, samples: list[CalibrationSample]) -> None:
    """Write records in the format load_calibration_samples reads."""
    lines = ["# delta1 beta1 gamma1 delta2 beta2 gamma2 theta1 theta2"]
    for s in samples:
        fields = list(s.q.as_array()) + [s.theta1, s.theta2]
        lines.append(" ".join(format(v, ".12g") for v in fields))
    Path(path).write_text("\n".join(lines) + "\n")
