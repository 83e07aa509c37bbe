import math

import numpy as np
import pytest

from cathkin.kinematics import (
    ARC_EPS,
    THETA_MAX,
    ConfigPsi,
    RobotGeometry,
    arc_h,
    arc_h_prime,
    arc_sinc,
    arc_sinc_prime,
    coil_fk,
    full_fk,
    segment_fk,
)
from cathkin.transforms import translate_z

# Gauss-Legendre nodes give machine-precision quadrature for these
# smooth integrands; 80 nodes is far more than needed.
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(80)


def arc_point_by_integration(theta, length, delta, fraction=1.0):
    """Independent position reference: integrate the unit tangent.

    The tangent at arc fraction u of a uniform-curvature bend is
    Rz(delta) @ [sin(u theta), 0, cos(u theta)].
    """
    u = 0.5 * fraction * (_NODES + 1.0)
    w = 0.5 * fraction * _WEIGHTS
    tx = np.sin(u * theta) * math.cos(delta)
    ty = np.sin(u * theta) * math.sin(delta)
    tz = np.cos(u * theta)
    return length * np.stack([tx, ty, tz]) @ w


def sample_configs(rng, n):
    for _ in range(n):
        yield (
            rng.uniform(1e-9, 2.8),
            rng.uniform(20.0, 120.0),
            rng.uniform(-math.pi, math.pi),
        )


def test_segment_position_matches_arc_integration():
    rng = np.random.default_rng(10)
    for theta, length, delta in sample_configs(rng, 100):
        pose = segment_fk(theta, length, delta)
        ref = arc_point_by_integration(theta, length, delta)
        assert np.allclose(pose.position, ref, atol=1e-9 * length)


def test_segment_rotation_maps_base_tangent_to_tip_tangent():
    rng = np.random.default_rng(11)
    for theta, length, delta in sample_configs(rng, 50):
        pose = segment_fk(theta, length, delta)
        tip_tangent = np.array(
            [
                math.sin(theta) * math.cos(delta),
                math.sin(theta) * math.sin(delta),
                math.cos(theta),
            ]
        )
        assert np.allclose(pose.z_axis, tip_tangent, atol=1e-12)
        assert np.allclose(pose.rotation @ pose.rotation.T, np.eye(3), atol=1e-12)


def test_segment_tip_lies_on_bending_circle():
    # Center of the bending circle sits at radius L/theta along the
    # bend direction; every arc point keeps that distance.
    theta, length, delta = 1.3, 80.0, 0.6
    radius = length / theta
    center = radius * np.array([math.cos(delta), math.sin(delta), 0.0])
    pose = segment_fk(theta, length, delta)
    assert math.isclose(np.linalg.norm(pose.position - center), radius, rel_tol=1e-12)


def test_segment_position_stays_in_bend_plane():
    rng = np.random.default_rng(12)
    for theta, length, delta in sample_configs(rng, 50):
        pose = segment_fk(theta, length, delta)
        normal = np.array([-math.sin(delta), math.cos(delta), 0.0])
        assert abs(pose.position @ normal) < 1e-9 * length


def test_straight_segment_is_pure_translation():
    pose = segment_fk(0.0, 50.0, 1.234)
    assert np.allclose(pose.position, [0.0, 0.0, 50.0])
    assert np.allclose(pose.rotation, np.eye(3))


def test_delta_only_rotates_result_about_z():
    theta, length = 0.9, 60.0
    base = segment_fk(theta, length, 0.0)
    for delta in (-2.0, 0.7, 3.0):
        rotated = segment_fk(theta, length, delta)
        cz, sz = math.cos(delta), math.sin(delta)
        rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(rotated.position, rz @ base.position, atol=1e-12)
        assert np.allclose(rotated.rotation, rz @ base.rotation @ rz.T, atol=1e-12)


def test_arc_helpers_continuous_across_branch_switch():
    # Evaluate the series branch just below the switch and compare to
    # stable closed forms at the same theta; at this magnitude the
    # closed forms are still accurate to ~1e-11 absolute.
    for sign in (1.0, -1.0):
        t = sign * ARC_EPS * 0.999
        h = 2.0 * math.sin(0.5 * t) ** 2 / t
        s = math.sin(t) / t
        assert math.isclose(arc_h(t), h, rel_tol=1e-12, abs_tol=1e-15)
        assert math.isclose(arc_sinc(t), s, rel_tol=1e-12)
        assert math.isclose(arc_h_prime(t), (math.sin(t) - h) / t, abs_tol=1e-12)
        assert math.isclose(arc_sinc_prime(t), (math.cos(t) - s) / t, abs_tol=1e-11)


def test_arc_helpers_match_closed_forms_away_from_zero():
    rng = np.random.default_rng(13)
    for theta in rng.uniform(0.01, 3.0, size=50):
        assert math.isclose(arc_h(theta), (1.0 - math.cos(theta)) / theta, rel_tol=1e-12)
        assert math.isclose(arc_sinc(theta), math.sin(theta) / theta, rel_tol=1e-12)


def test_arc_helper_derivatives_match_finite_differences():
    rng = np.random.default_rng(14)
    thetas = np.concatenate(
        [rng.uniform(1e-3, 3.0, size=30), rng.uniform(-3.0, -1e-3, size=10)]
    )
    h = 1e-6
    for theta in thetas:
        fd_h = (arc_h(theta + h) - arc_h(theta - h)) / (2.0 * h)
        fd_s = (arc_sinc(theta + h) - arc_sinc(theta - h)) / (2.0 * h)
        assert math.isclose(arc_h_prime(theta), fd_h, rel_tol=1e-6, abs_tol=1e-9)
        assert math.isclose(arc_sinc_prime(theta), fd_s, rel_tol=1e-6, abs_tol=1e-9)


def test_arc_helper_limits_at_zero():
    assert arc_h(0.0) == 0.0
    assert arc_sinc(0.0) == 1.0
    assert arc_h_prime(0.0) == 0.5
    assert arc_sinc_prime(0.0) == 0.0


def test_full_fk_is_composition_of_stages():
    psi = ConfigPsi(0.8, 70.0, 0.3, 1.1, 40.0, -1.2)
    geom = RobotGeometry(Ln=12.0)
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    pose2 = segment_fk(psi.theta2, psi.L2, psi.delta2)
    expected = pose1.matrix() @ translate_z(geom.Ln).matrix() @ pose2.matrix()
    assert np.allclose(full_fk(psi, geom).matrix(), expected, atol=1e-12)


def test_full_fk_straight_robot_total_length():
    psi = ConfigPsi(0.0, 70.0, 0.0, 0.0, 40.0, 0.0)
    geom = RobotGeometry(Ln=15.0)
    pose = full_fk(psi, geom)
    assert np.allclose(pose.position, [0.0, 0.0, 125.0])
    assert np.allclose(pose.rotation, np.eye(3))


def test_coil_fk_zero_offset_matches_segment_tips():
    psi = ConfigPsi(0.6, 70.0, 0.5, 0.9, 40.0, -0.4)
    geom = RobotGeometry(Ln=10.0, coil_offset1=0.0, coil_offset2=0.0)
    coil1, coil2 = coil_fk(psi, geom)
    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    tip = full_fk(psi, geom)
    assert np.allclose(coil1.matrix(), pose1.matrix(), atol=1e-12)
    assert np.allclose(coil2.matrix(), tip.matrix(), atol=1e-12)


def test_coil_positions_lie_on_their_arcs():
    psi = ConfigPsi(1.2, 70.0, 0.8, 0.7, 40.0, -2.0)
    geom = RobotGeometry(Ln=10.0, coil_offset1=7.5, coil_offset2=4.0)
    coil1, coil2 = coil_fk(psi, geom)

    frac1 = (psi.L1 - geom.coil_offset1) / psi.L1
    ref1 = arc_point_by_integration(psi.theta1, psi.L1, psi.delta1, frac1)
    assert np.allclose(coil1.position, ref1, atol=1e-9 * psi.L1)

    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    base2 = pose1.compose(translate_z(geom.Ln))
    frac2 = (psi.L2 - geom.coil_offset2) / psi.L2
    local2 = arc_point_by_integration(psi.theta2, psi.L2, psi.delta2, frac2)
    assert np.allclose(coil2.position, base2.transform_point(local2), atol=1e-9 * psi.L2)


def test_coil_offset_must_be_shorter_than_segment():
    psi = ConfigPsi(0.5, 70.0, 0.0, 0.5, 40.0, 0.0)
    with pytest.raises(ValueError):
        coil_fk(psi, RobotGeometry(Ln=10.0, coil_offset1=70.0))
    with pytest.raises(ValueError):
        coil_fk(psi, RobotGeometry(Ln=10.0, coil_offset2=45.0))


def test_config_validate_rejects_bad_values():
    good = ConfigPsi(0.5, 70.0, 0.0, 0.5, 40.0, 0.0)
    good.validate()
    with pytest.raises(ValueError):
        ConfigPsi(-0.1, 70.0, 0.0, 0.5, 40.0, 0.0).validate()
    with pytest.raises(ValueError):
        ConfigPsi(0.5, 0.0, 0.0, 0.5, 40.0, 0.0).validate()
    with pytest.raises(ValueError):
        ConfigPsi(0.5, 70.0, 0.0, math.pi, 40.0, 0.0).validate()
    with pytest.raises(ValueError):
        ConfigPsi(float("nan"), 70.0, 0.0, 0.5, 40.0, 0.0).validate()
    ConfigPsi(THETA_MAX, 70.0, 0.0, 0.0, 40.0, 0.0).validate()


def test_geometry_validate_rejects_bad_values():
    RobotGeometry(Ln=0.0).validate()
    with pytest.raises(ValueError):
        RobotGeometry(Ln=-1.0).validate()
    with pytest.raises(ValueError):
        RobotGeometry(coil_offset1=-0.5).validate()


def test_config_array_roundtrip_and_normalization():
    psi = ConfigPsi(0.5, 70.0, 4.0, 0.4, 40.0, -3.5)
    again = ConfigPsi.from_array(psi.as_array())
    assert again == psi
    norm = psi.normalized()
    assert -math.pi < norm.delta1 <= math.pi
    assert -math.pi < norm.delta2 <= math.pi
    # wrapped plane angles leave the pose unchanged
    geom = RobotGeometry(Ln=10.0)
    assert np.allclose(
        full_fk(psi, geom).matrix(), full_fk(norm, geom).matrix(), atol=1e-12
    )
