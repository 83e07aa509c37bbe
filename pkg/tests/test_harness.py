import json
import math

import numpy as np
import pytest

from cathkin.config import ConfigError, ExperimentConfig, load_config, parse_config
from cathkin.experiment import run_experiment, write_outputs
from cathkin.paths import PathSpec, decompose_error, generate_path, plane_basis
from cathkin.reporting import fmt


def test_circle_geometry():
    spec = PathSpec(radius=20.0, n_points=72)
    pts = generate_path(spec)
    assert pts.shape == (72, 3)
    radii = np.linalg.norm(pts - spec.center, axis=1)
    assert np.max(np.abs(radii - 20.0)) < 1e-9
    # consecutive angular spacing 5 degrees
    rel = pts - spec.center
    for a, b in zip(rel, rel[1:]):
        cosang = float(a @ b) / (20.0 * 20.0)
        assert math.isclose(math.degrees(math.acos(np.clip(cosang, -1, 1))), 5.0,
                            abs_tol=1e-9)


def test_single_point_path():
    spec = PathSpec(n_points=1)
    pts = generate_path(spec)
    assert pts.shape == (1, 3)
    assert math.isclose(np.linalg.norm(pts[0] - spec.center), spec.radius,
                        abs_tol=1e-9)


def test_centroid_is_center():
    spec = PathSpec(n_points=72)
    pts = generate_path(spec)
    assert np.linalg.norm(pts.mean(axis=0) - spec.center) < 1e-9


def test_points_lie_in_plane():
    spec = PathSpec()
    pts = generate_path(spec)
    offsets = (pts - spec.center) @ spec.normal
    assert np.max(np.abs(offsets)) < 1e-9


def test_direction_and_phase():
    ccw = generate_path(PathSpec(n_points=12, direction="ccw"))
    cw = generate_path(PathSpec(n_points=12, direction="cw"))
    spec = PathSpec(n_points=12)
    # ccw traversal has positive circulation about the normal
    a, b = ccw[0] - spec.center, ccw[1] - spec.center
    assert float(np.cross(a, b) @ spec.normal) > 0.0
    a, b = cw[0] - spec.center, cw[1] - spec.center
    assert float(np.cross(a, b) @ spec.normal) < 0.0
    # same point set, opposite order
    assert np.allclose(cw[0], ccw[0])
    assert np.allclose(cw[1:], ccw[1:][::-1], atol=1e-9)

    shifted = generate_path(PathSpec(n_points=12, start_phase=2.0 * np.pi / 12.0))
    assert np.allclose(shifted[0], ccw[1], atol=1e-9)


def test_plane_basis_right_handed():
    for normal in ([0.5, 0.0, math.sqrt(3) / 2], [0, 0, 1], [1, 0, 0], [0.3, -0.4, 0.5]):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        u, v = plane_basis(n)
        assert abs(u @ v) < 1e-12
        assert np.allclose(np.cross(u, v), n, atol=1e-12)


def test_path_validation():
    for bad in (
        dict(kind="spiral"),
        dict(radius=0.0),
        dict(radius=-1.0),
        dict(n_points=0),
        dict(direction="widdershins"),
        dict(normal=[0.0, 0.0, 2.0]),
        dict(center=[0.0, np.nan, 0.0]),
    ):
        with pytest.raises(ValueError):
            generate_path(PathSpec(**bad))


def test_decompose_error_cases():
    n = np.array([0.0, 0.0, 1.0])
    out, inp = decompose_error(np.array([0.0, 0.0, 2.5]), n)
    assert math.isclose(out, 2.5) and inp < 1e-12
    out, inp = decompose_error(np.array([1.0, -2.0, 0.0]), n)
    assert out < 1e-12 and math.isclose(inp, math.sqrt(5.0))
    out, inp = decompose_error(np.array([3.0, 4.0, 0.0]), n)
    assert (out, inp) == (0.0, 5.0)


def test_decompose_error_pythagorean():
    rng = np.random.default_rng(3)
    for _ in range(50):
        e = rng.normal(size=3)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        out, inp = decompose_error(e, n)
        assert math.isclose(out * out + inp * inp, float(e @ e), abs_tol=1e-9)


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.seed == 0
    assert cfg.schemes == ("closed_loop_fit",)
    assert cfg.params.k1 == 0.5
    assert cfg.plant.true_params == cfg.params
    assert cfg.path.n_points == 72
    assert cfg.control.max_cycles_per_target == 20


def test_full_config_round_trip():
    text = """
seed: 11
schemes: [open_loop, closed_loop]
params: {k1: 0.55, kc: 0.2}
geometry: {Ln: 12.0}
limits: {beta1: [0, 30]}
control: {alpha: 0.4, max_cycles_per_target: 15}
home: {beta1: 12.0, gamma1: 0.7}
plant:
  params: {k1: 0.6}
  backlash_width: 0.03
  sensor_noise_sigma_pos: 0.1
path: {radius: 15.0, n_points: 36, direction: cw}
fit:
  weights: {w_t1: 16.0}
  settings: {max_iterations: 40}
"""
    cfg = parse_config(text)
    assert cfg.seed == 11
    assert cfg.schemes == ("open_loop", "closed_loop")
    assert cfg.params.k1 == 0.55 and cfg.params.kc == 0.2
    assert cfg.geometry.Ln == 12.0
    assert cfg.limits.beta1 == (0.0, 30.0)
    assert cfg.control.alpha == 0.4
    assert cfg.home.beta1 == 12.0
    # plant inherits model values except where overridden
    assert cfg.plant.true_params.k1 == 0.6
    assert cfg.plant.true_params.kc == 0.2
    assert cfg.plant.backlash_width == 0.03
    assert cfg.plant.rng_seed == 11
    assert cfg.path.radius == 15.0 and cfg.path.direction == "cw"
    assert cfg.fit_weights.w_t1 == 16.0
    assert cfg.fit_settings.max_iterations == 40


def test_config_errors_name_the_field():
    cases = [
        ("bogus_key: 1", "bogus_key"),
        ("params: {k9: 1.0}", "params.k9"),
        ("params: {k1: fast}", "params.k1"),
        ("control: {alpha: 2.0}", "control"),
        ("control: {scheme: open_loop}", "control.scheme"),
        ("schemes: [pid]", "schemes"),
        ("schemes: []", "schemes"),
        ("schemes: [open_loop, open_loop]", "schemes"),
        ("limits: {beta1: [5]}", "limits.beta1"),
        ("path: {radius: -3}", "path"),
        ("path: {normal: [0, 0, 0]}", "path.normal"),
        ("plant: {backlash_width: -1}", "plant"),
        ("home: {beta1: 400}", "home"),
        ("seed: about_seven", "<top>.seed"),
        ("[1, 2, 3]", "<document>"),
        ("{unbalanced: [", "<document>"),
    ]
    for text, field in cases:
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.field == field, f"for {text!r}: {err.value}"


def test_home_outside_limits_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("home: {beta2: 10.0}")  # beta2 limit floor is 15
    assert err.value.field in ("home", "home.beta2")


def test_with_seed_and_schemes():
    cfg = parse_config("seed: 1")
    cfg2 = cfg.with_seed(99)
    assert cfg2.seed == 99 and cfg2.plant.rng_seed == 99
    assert cfg.seed == 1
    cfg3 = cfg.with_schemes(("open_loop",))
    assert cfg3.schemes == ("open_loop",)
    with pytest.raises(ConfigError):
        cfg.with_schemes(("pid",))


def test_load_config_file(tmp_path):
    p = tmp_path / "exp.yaml"
    p.write_text("seed: 5\npath: {n_points: 9}\n")
    cfg = load_config(p)
    assert cfg.seed == 5 and cfg.path.n_points == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


SMALL_CLEAN = """
seed: 4
schemes: [open_loop, closed_loop, closed_loop_fit]
geometry: {Ln: 0.0}
path: {radius: 6.0, n_points: 6, center: [0.0, 0.0, 120.0]}
"""

SMALL_MISMATCH = """
seed: 4
schemes: [open_loop, closed_loop]
geometry: {Ln: 0.0}
plant:
  params: {k1: 0.56, k2: 0.36}
path: {radius: 6.0, n_points: 6, center: [0.0, 0.0, 120.0]}
"""


def test_zero_mismatch_experiment_converges():
    outcome = run_experiment(parse_config(SMALL_CLEAN))
    for scheme in ("open_loop", "closed_loop", "closed_loop_fit"):
        report = outcome.report_for(scheme)
        agg = report.aggregates
        assert agg["convergence_rate"] == 1.0, scheme
        assert agg["mean_final_error_mm"] < 1.0, scheme


def test_mismatch_scheme_ordering():
    outcome = run_experiment(parse_config(SMALL_MISMATCH))
    open_in = outcome.report_for("open_loop").aggregates["mean_in_plane_mm"]
    closed_in = outcome.report_for("closed_loop").aggregates["mean_in_plane_mm"]
    assert open_in > closed_in


def test_report_rows_satisfy_decomposition():
    outcome = run_experiment(parse_config(SMALL_MISMATCH))
    for report in outcome.reports:
        for row in report.rows:
            total_sq = row.final_error**2
            parts_sq = row.in_plane**2 + row.out_of_plane**2
            assert math.isclose(total_sq, parts_sq, abs_tol=1e-9)


def test_report_is_pure_function_of_rows():
    outcome = run_experiment(parse_config(SMALL_MISMATCH))
    report = outcome.reports[0]
    agg = report.aggregates
    assert agg["mean_final_error_mm"] == float(np.mean([r.final_error for r in report.rows]))
    assert agg["max_in_plane_mm"] == float(np.max([r.in_plane for r in report.rows]))
    assert agg["n_waypoints"] == len(report.rows)


def test_rendered_files_are_deterministic():
    first = run_experiment(parse_config(SMALL_MISMATCH)).rendered_files()
    second = run_experiment(parse_config(SMALL_MISMATCH)).rendered_files()
    assert first == second
    assert set(first) == {"report.json", "waypoints.csv", "cycles.csv"}


def test_rendered_file_shapes():
    outcome = run_experiment(parse_config(SMALL_MISMATCH))
    files = outcome.rendered_files()

    report = json.loads(files["report.json"])
    assert report["seed"] == 4
    assert set(report["schemes"]) == {"open_loop", "closed_loop"}
    assert report["path"]["n_points"] == 6

    waypoint_lines = files["waypoints.csv"].strip().split("\n")
    assert waypoint_lines[0].startswith("scheme,waypoint,converged")
    assert len(waypoint_lines) == 1 + 2 * 6

    cycle_lines = files["cycles.csv"].strip().split("\n")
    header = cycle_lines[0].split(",")
    assert header[0] == "scheme" and "measured_x" in header
    for line in cycle_lines[1:]:
        assert len(line.split(",")) == len(header)
    total_logs = sum(len(v) for v in outcome.logs.values())
    assert len(cycle_lines) == 1 + total_logs


def test_write_outputs(tmp_path):
    outcome = run_experiment(parse_config(SMALL_CLEAN))
    written = write_outputs(outcome, tmp_path / "out")
    assert sorted(p.name for p in written) == ["cycles.csv", "report.json", "waypoints.csv"]
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_float_formatting_9_digits():
    assert fmt(1.0 / 3.0) == "0.333333333"
    assert fmt(20.0) == "20"
    assert fmt(-1.45e-7) == "-1.45e-07"
    assert fmt(123456789012.0) == "1.23456789e+11"
