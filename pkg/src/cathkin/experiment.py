"""End-to-end experiment runner: one plant + controller per scheme.

Every scheme starts from an identically seeded plant so the comparison
isolates the control strategy, not the noise draw.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .actuation import ActuationQ
from .config import ExperimentConfig
from .control import Controller, CycleLog, WaypointResult, solve_model_ik
from .paths import generate_path
from .plant import TendonPlant
from .reporting import (
    PathReport,
    build_report,
    render_cycles_csv,
    render_report_json,
    render_waypoints_csv,
)

OUTPUT_FILES = ("report.json", "waypoints.csv", "cycles.csv")


@dataclass(frozen=True)
class ExperimentOutcome:
    config: ExperimentConfig
    reports: tuple[PathReport, ...]
    results: dict[str, list[WaypointResult]]
    logs: dict[str, list[CycleLog]]

    def report_for(self, scheme: str) -> PathReport:
        for report in self.reports:
            if report.scheme == scheme:
                return report
        raise KeyError(scheme)

    def rendered_files(self) -> dict[str, str]:
        return {
            "report.json": render_report_json(
                list(self.reports), self.config.path, self.config.seed
            ),
            "waypoints.csv": render_waypoints_csv(list(self.reports)),
            "cycles.csv": render_cycles_csv(self.logs),
        }


def resolve_start(config: ExperimentConfig) -> ActuationQ:
    """Initial command for the run: the configured home, or (default) a
    model-IK solution posing the tip at the first waypoint, the way a
    tracking experiment is set up before logging begins."""
    if config.start == "home":
        return config.home
    waypoints = generate_path(config.path)
    q_start, _ = solve_model_ik(
        waypoints[0], config.params, config.geometry, config.limits,
        seed=config.home,
    )
    return q_start


def run_scheme(config: ExperimentConfig, scheme: str, q_start: ActuationQ | None = None):
    """Run follow_path once for one scheme on a freshly seeded plant."""
    waypoints = generate_path(config.path)
    if q_start is None:
        q_start = resolve_start(config)
    plant = TendonPlant(config.plant, q_start)
    controller = Controller(
        config.params,
        config.geometry,
        replace(config.control, scheme=scheme),
        config.limits,
        q_start,
        fit_weights=config.fit_weights,
        fit_settings=config.fit_settings,
    )
    results, logs = controller.follow_path(waypoints, plant)
    return results, logs


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    """Run all requested schemes and build per-scheme reports.

    Plant faults (PlantAbort) propagate to the caller."""
    reports = []
    results_by_scheme: dict[str, list[WaypointResult]] = {}
    logs_by_scheme: dict[str, list[CycleLog]] = {}
    q_start = resolve_start(config)
    for scheme in config.schemes:
        results, logs = run_scheme(config, scheme, q_start)
        results_by_scheme[scheme] = results
        logs_by_scheme[scheme] = logs
        reports.append(build_report(scheme, results, logs, config.path.normal))
    return ExperimentOutcome(
        config=config,
        reports=tuple(reports),
        results=results_by_scheme,
        logs=logs_by_scheme,
    )


def write_outputs(outcome: ExperimentOutcome, out_dir: str | Path) -> list[Path]:
    """Write report.json, waypoints.csv, and cycles.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in outcome.rendered_files().items():
        target = out / name
        target.write_text(content)
        written.append(target)
    return written
