import math

import numpy as np
import pytest

from cathkin.actuation import (
    ActuationParams,
    ActuationQ,
    geometry_for,
    shape_map_unchecked,
)
from cathkin.jacobians import (
    ControlJacobian,
    RankDeficiencyError,
    actuation_jacobian,
    coil_jacobians,
    control_jacobian,
    damped_pinv,
    exposed_length_jacobian,
    finite_difference_report,
    ln_coupling_term,
    robot_linear_jacobian,
    segment_jacobian,
)
from cathkin.kinematics import ARC_EPS, ConfigPsi, RobotGeometry, coil_fk, full_fk, segment_fk
from cathkin.transforms import skew


def fd_position(func, x0, step=1e-6):
    cols = []
    for j in range(len(x0)):
        hi = np.array(x0, dtype=float)
        lo = np.array(x0, dtype=float)
        hi[j] += step
        lo[j] -= step
        cols.append((func(hi) - func(lo)) / (2.0 * step))
    return np.column_stack(cols)


def random_psi(rng, theta_lo=0.05, theta_hi=2.5):
    return ConfigPsi(
        theta1=rng.uniform(theta_lo, theta_hi),
        L1=rng.uniform(40.0, 100.0),
        delta1=rng.uniform(-math.pi, math.pi),
        theta2=rng.uniform(theta_lo, theta_hi),
        L2=rng.uniform(25.0, 60.0),
        delta2=rng.uniform(-math.pi, math.pi),
    )


def test_straight_limit_columns():
    seg = segment_jacobian(0.0, 50.0, 0.0)
    assert np.allclose(seg.Jv[:, 1], [0.0, 0.0, 1.0])
    assert np.allclose(seg.Jv[:, 2], [0.0, 0.0, 0.0])


def test_quarter_turn_length_column():
    seg = segment_jacobian(math.pi / 2, 25.0 * math.pi, 0.0)
    assert np.allclose(seg.Jv[:, 1], [2.0 / math.pi, 0.0, 2.0 / math.pi], atol=1e-12)


def test_length_column_norm_bounded():
    rng = np.random.default_rng(30)
    for _ in range(100):
        theta = rng.uniform(0.0, 3.1)
        seg = segment_jacobian(theta, rng.uniform(20.0, 100.0), rng.uniform(-3.0, 3.0))
        assert np.linalg.norm(seg.Jv[:, 1]) <= 1.0 + 1e-9


def test_segment_jacobian_matches_finite_differences():
    rng = np.random.default_rng(31)
    for _ in range(50):
        theta = rng.uniform(0.05, 2.5)
        length = rng.uniform(20.0, 100.0)
        delta = rng.uniform(-math.pi, math.pi)
        seg = segment_jacobian(theta, length, delta)
        fd = fd_position(
            lambda x: segment_fk(x[0], x[1], x[2]).position, [theta, length, delta]
        )
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(seg.Jv - fd)) / scale < 1e-5


def test_segment_angular_jacobian_matches_finite_differences():
    rng = np.random.default_rng(32)
    step = 1e-6
    for _ in range(30):
        x0 = np.array(
            [rng.uniform(0.05, 2.5), rng.uniform(20.0, 100.0), rng.uniform(-3.0, 3.0)]
        )
        seg = segment_jacobian(*x0)
        r0 = segment_fk(*x0).rotation
        fd = np.empty((3, 3))
        for j in range(3):
            hi, lo = x0.copy(), x0.copy()
            hi[j] += step
            lo[j] -= step
            dr = (segment_fk(*hi).rotation - segment_fk(*lo).rotation) / (2.0 * step)
            om = dr @ r0.T
            om = 0.5 * (om - om.T)
            fd[:, j] = [om[2, 1], om[0, 2], om[1, 0]]
        scale = max(np.max(np.abs(fd)), 1e-9)
        assert np.max(np.abs(seg.Jw - fd)) / scale < 1e-5


def test_segment_jacobian_continuity_at_branch_switch():
    for factor in (1.0 - 1e-9, 1.0 + 1e-9):
        lo = segment_jacobian(ARC_EPS * (1.0 - 1e-9), 80.0, 0.7)
        hi = segment_jacobian(ARC_EPS * factor, 80.0, 0.7)
        assert np.max(np.abs(lo.Jv - hi.Jv)) < 1e-6
        assert np.max(np.abs(lo.Jw - hi.Jw)) < 1e-6


def test_segment_jacobian_rejects_bad_inputs():
    with pytest.raises(ValueError):
        segment_jacobian(0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        segment_jacobian(float("nan"), 50.0, 0.0)


def test_robot_jacobian_straight_plane_columns_vanish():
    psi = ConfigPsi(0.0, 70.0, 0.4, 0.0, 40.0, -1.0)
    jv = robot_linear_jacobian(psi, RobotGeometry(Ln=10.0))
    assert np.allclose(jv[:, 2], 0.0, atol=1e-12)
    assert np.allclose(jv[:, 5], 0.0, atol=1e-12)


def test_robot_jacobian_matches_finite_differences_of_tip():
    rng = np.random.default_rng(33)
    geom = RobotGeometry(Ln=10.0)
    for _ in range(50):
        psi = random_psi(rng)
        jv = robot_linear_jacobian(psi, geom)
        fd = fd_position(
            lambda x: full_fk(ConfigPsi.from_array(x), geom).position, psi.as_array()
        )
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(jv - fd)) / scale < 1e-5


def test_robot_jacobian_controlled_point_follows_coil_offset():
    rng = np.random.default_rng(34)
    geom = RobotGeometry(Ln=10.0, coil_offset2=5.0)
    for _ in range(10):
        psi = random_psi(rng)
        jv = robot_linear_jacobian(psi, geom)
        fd = fd_position(
            lambda x: coil_fk(ConfigPsi.from_array(x), geom)[1].position, psi.as_array()
        )
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(jv - fd)) / scale < 1e-5


def test_length_columns_point_along_chords():
    # Extending a segment at fixed bend angle rescales its arc, so the
    # tip moves along the chord direction p/L, not the tip tangent.
    psi = ConfigPsi(0.9, 70.0, 0.5, 1.1, 40.0, -0.8)
    geom = RobotGeometry(Ln=10.0)
    jv = robot_linear_jacobian(psi, geom)

    pose1 = segment_fk(psi.theta1, psi.L1, psi.delta1)
    chord2 = pose1.rotation @ segment_fk(psi.theta2, psi.L2, psi.delta2).position / psi.L2
    assert np.allclose(jv[:, 4], chord2, atol=1e-12)

    # in the straight limit the chord and the tangent coincide
    straight = ConfigPsi(0.9, 70.0, 0.5, 1e-9, 40.0, -0.8)
    jvs = robot_linear_jacobian(straight, geom)
    tip_tangent = full_fk(straight, geom).z_axis
    cosang = jvs[:, 4] @ tip_tangent / np.linalg.norm(jvs[:, 4])
    assert cosang > 1.0 - 1e-12


def test_coil_jacobians_match_finite_differences():
    rng = np.random.default_rng(35)
    geom = RobotGeometry(Ln=10.0, coil_offset1=6.0, coil_offset2=3.0)
    for _ in range(20):
        psi = random_psi(rng)
        (jp1, jw1), (jp2, jw2) = coil_jacobians(psi, geom)

        fd1 = fd_position(
            lambda x: coil_fk(ConfigPsi.from_array(x), geom)[0].position, psi.as_array()
        )
        fd2 = fd_position(
            lambda x: coil_fk(ConfigPsi.from_array(x), geom)[1].position, psi.as_array()
        )
        assert np.max(np.abs(jp1 - fd1)) / np.max(np.abs(fd1)) < 1e-5
        assert np.max(np.abs(jp2 - fd2)) / np.max(np.abs(fd2)) < 1e-5

        # tangent sensitivity comes from the angular map: dt = omega x t
        c1, c2 = coil_fk(psi, geom)
        jt1 = -skew(c1.z_axis) @ jw1
        jt2 = -skew(c2.z_axis) @ jw2
        fdt1 = fd_position(
            lambda x: coil_fk(ConfigPsi.from_array(x), geom)[0].z_axis, psi.as_array()
        )
        fdt2 = fd_position(
            lambda x: coil_fk(ConfigPsi.from_array(x), geom)[1].z_axis, psi.as_array()
        )
        assert np.max(np.abs(jt1 - fdt1)) / max(np.max(np.abs(fdt1)), 1e-9) < 1e-5
        assert np.max(np.abs(jt2 - fdt2)) / max(np.max(np.abs(fdt2)), 1e-9) < 1e-5


def test_sheath_coil_ignores_catheter_parameters():
    psi = ConfigPsi(0.8, 70.0, 0.2, 0.6, 40.0, 1.0)
    (jp1, jw1), _ = coil_jacobians(psi, RobotGeometry(Ln=10.0, coil_offset1=4.0))
    assert np.allclose(jp1[:, 3:], 0.0)
    assert np.allclose(jw1[:, 3:], 0.0)


def test_actuation_jacobian_entries():
    params = ActuationParams(k1=0.5, k2=0.4, kc=0.2)
    q = ActuationQ(0.3, 10.0, 1.2, 0.3, 20.0, 0.8)
    jq = actuation_jacobian(q, params)
    assert jq[0, 2] == 0.5
    # aligned planes: coupling slope w.r.t. gamma1 is kc*k1
    assert math.isclose(jq[3, 2], 0.2 * 0.5)
    assert jq[3, 5] == 0.4
    assert jq[1, 1] == 1.0 and jq[4, 4] == 1.0
    assert jq[2, 0] == 1.0 and jq[5, 3] == 1.0


def test_actuation_jacobian_matches_finite_differences():
    params = ActuationParams()
    rng = np.random.default_rng(36)
    for _ in range(30):
        q = ActuationQ(
            delta1=rng.uniform(-2.0, 2.0),
            beta1=rng.uniform(1.0, 24.0),
            gamma1=rng.uniform(0.1, 2.0),
            delta2=rng.uniform(-2.0, 2.0),
            beta2=rng.uniform(16.0, 49.0),
            gamma2=rng.uniform(0.1, 2.0),
        )
        jq = actuation_jacobian(q, params)
        fd = fd_position(
            lambda x: shape_map_unchecked(ActuationQ.from_array(x), params).as_array(),
            q.as_array(),
        )
        scale = np.max(np.abs(fd))
        assert np.max(np.abs(jq - fd)) / scale < 1e-6


def test_control_jacobian_composition_invariant():
    params = ActuationParams()
    q = ActuationQ(0.2, 10.0, 1.0, -0.4, 20.0, 1.1)
    psi = shape_map_unchecked(q, params)
    geom = geometry_for(q, params, RobotGeometry())
    cj = control_jacobian(psi, q, params, geom)
    assert isinstance(cj, ControlJacobian)
    assert np.max(np.abs(cj.J - cj.Jv_full @ cj.Jq)) < 1e-12


def test_ln_coupling_term_completes_the_q_jacobian():
    # With insertion-coupled exposed length, J = Jv_full @ Jq misses the
    # straight-section motion; the correction must make the total match
    # finite differences of the full q -> tip map.
    params = ActuationParams(ln_coupled=True)
    base = RobotGeometry(Ln=0.0)
    q0 = ActuationQ(0.2, 10.0, 1.0, -0.4, 20.0, 1.1)

    def tip_of_q(x):
        qq = ActuationQ.from_array(x)
        psi = shape_map_unchecked(qq, params)
        return full_fk(psi, geometry_for(qq, params, base)).position

    psi0 = shape_map_unchecked(q0, params)
    geom0 = geometry_for(q0, params, base)
    cj = control_jacobian(psi0, q0, params, geom0)
    total = cj.J + ln_coupling_term(psi0, params, geom0)
    fd = fd_position(tip_of_q, q0.as_array())
    assert np.max(np.abs(total - fd)) / np.max(np.abs(fd)) < 1e-5

    fixed = ActuationParams(ln_coupled=False)
    assert np.allclose(ln_coupling_term(psi0, fixed, geom0), 0.0)
    assert np.allclose(exposed_length_jacobian(fixed), 0.0)
    assert np.allclose(exposed_length_jacobian(params), [0, -1, 0, 0, 1, 0])


def test_damped_pinv_exact_right_inverse():
    j = np.hstack([np.eye(3), np.zeros((3, 3))])
    pinv = damped_pinv(j, 0.0)
    assert np.allclose(pinv, np.vstack([np.eye(3), np.zeros((3, 3))]))


def test_damped_pinv_penrose_condition():
    rng = np.random.default_rng(37)
    for _ in range(20):
        j = rng.standard_normal((3, 6))
        pinv = damped_pinv(j, 0.0)
        assert np.max(np.abs(j @ pinv @ j - j)) < 1e-9
        assert np.allclose(pinv, np.linalg.pinv(j), atol=1e-9)


def test_damped_pinv_symmetric_damping_identity():
    rng = np.random.default_rng(38)
    lam = 0.3
    for _ in range(10):
        j = rng.standard_normal((3, 6))
        left = damped_pinv(j, lam)
        right = np.linalg.solve(j.T @ j + lam * lam * np.eye(6), j.T)
        assert np.max(np.abs(left - right)) < 1e-9


def test_damped_pinv_norm_bound():
    # smallest singular value far below the damping floor
    u, _, vt = np.linalg.svd(np.random.default_rng(39).standard_normal((3, 6)), full_matrices=False)
    j = u @ np.diag([1.0, 1e-2, 1e-4]) @ vt
    lam = 0.1
    pinv = damped_pinv(j, lam)
    assert np.linalg.norm(pinv, 2) <= 1.0 / (2.0 * lam) + 1e-12


def test_damped_pinv_rank_deficiency_error():
    j = np.zeros((3, 6))
    j[0, 0] = 1.0
    with pytest.raises(RankDeficiencyError):
        damped_pinv(j, 0.0)
    # damping makes it well posed again
    assert np.all(np.isfinite(damped_pinv(j, 1e-2)))
    with pytest.raises(ValueError):
        damped_pinv(j, -1.0)


def test_finite_difference_report_is_clean():
    params = ActuationParams()
    rng = np.random.default_rng(40)
    geom = RobotGeometry(Ln=10.0, coil_offset2=2.0)
    for _ in range(5):
        psi = random_psi(rng)
        q = ActuationQ(0.1, 5.0, 0.9, -0.2, 22.0, 0.7)
        report = finite_difference_report(psi, q, params, geom)
        assert set(report) == {
            "segment1_v", "segment1_w", "segment2_v", "segment2_w",
            "robot_linear", "actuation",
        }
        for value in report.values():
            assert value < 1e-5
