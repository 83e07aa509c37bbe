"""Per-waypoint error reports and machine-readable experiment output.

Everything here is a pure function of the cycle logs and waypoint results:
no clocks, no RNG, no filesystem. Rendering is deterministic so repeated
runs with the same config produce byte-identical files. Floats are written
with 9 significant digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .control import CycleLog, WaypointResult
from .paths import PathSpec, decompose_error

CYCLE_COLUMNS = (
    "scheme", "waypoint", "cycle",
    "target_x", "target_y", "target_z",
    "measured_x", "measured_y", "measured_z",
    "model_x", "model_y", "model_z",
    "theta1", "L1", "delta1_psi", "theta2", "L2", "delta2_psi",
    "q_delta1", "q_beta1", "q_gamma1", "q_delta2", "q_beta2", "q_gamma2",
    "converged", "saturated",
)

WAYPOINT_COLUMNS = (
    "scheme", "waypoint", "converged", "cycles_used",
    "final_error_mm", "in_plane_mm", "out_of_plane_mm", "model_gap_mm",
)


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def _round9(x: float) -> float:
    # round-trip through the 9-significant-digit text form so that json
    # output carries the same precision as the CSV files
    return float(fmt(x))


@dataclass(frozen=True)
class WaypointErrors:
    """Final-cycle error summary for one waypoint."""

    index: int
    converged: bool
    cycles_used: int
    final_error: float
    in_plane: float
    out_of_plane: float
    model_gap: float


@dataclass(frozen=True)
class PathReport:
    """Per-waypoint rows plus aggregate statistics for one scheme."""

    scheme: str
    rows: tuple[WaypointErrors, ...]

    @property
    def aggregates(self) -> dict:
        finals = np.array([r.final_error for r in self.rows])
        inp = np.array([r.in_plane for r in self.rows])
        outp = np.array([r.out_of_plane for r in self.rows])
        gaps = np.array([r.model_gap for r in self.rows])
        cycles = np.array([r.cycles_used for r in self.rows])
        conv = np.array([r.converged for r in self.rows])
        return {
            "n_waypoints": len(self.rows),
            "convergence_rate": float(np.mean(conv)),
            "mean_cycles": float(np.mean(cycles)),
            "mean_final_error_mm": float(np.mean(finals)),
            "max_final_error_mm": float(np.max(finals)),
            "mean_in_plane_mm": float(np.mean(inp)),
            "max_in_plane_mm": float(np.max(inp)),
            "mean_out_of_plane_mm": float(np.mean(outp)),
            "max_out_of_plane_mm": float(np.max(outp)),
            "mean_model_gap_mm": float(np.mean(gaps)),
            "max_model_gap_mm": float(np.max(gaps)),
        }


def build_report(
    scheme: str,
    results: list[WaypointResult],
    logs: list[CycleLog],
    path_normal: np.ndarray,
) -> PathReport:
    """Summarize a follow_path run. The model-vs-measured gap is taken from
    the last logged cycle of each waypoint."""
    if not results:
        raise ValueError("cannot build a report from zero waypoints")
    last_log: dict[int, CycleLog] = {}
    for log in logs:
        last_log[log.waypoint_index] = log

    rows = []
    for res in results:
        err_vec = res.target - res.final_measured_tip
        out_of_plane, in_plane = decompose_error(err_vec, path_normal)
        log = last_log.get(res.waypoint_index)
        if log is None:
            raise ValueError(f"no cycle logs for waypoint {res.waypoint_index}")
        model_gap = float(np.linalg.norm(log.model_tip - log.measured_tip))
        rows.append(
            WaypointErrors(
                index=res.waypoint_index,
                converged=res.converged,
                cycles_used=res.cycles_used,
                final_error=res.final_error,
                in_plane=in_plane,
                out_of_plane=out_of_plane,
                model_gap=model_gap,
            )
        )
    return PathReport(scheme=scheme, rows=tuple(rows))


def render_report_json(reports: list[PathReport], spec: PathSpec, seed: int) -> str:
    """Aggregate report for all schemes as a JSON string (stable key order)."""
    doc = {
        "seed": seed,
        "path": {
            "kind": spec.kind,
            "center": [_round9(c) for c in spec.center],
            "normal": [_round9(c) for c in spec.normal],
            "radius": _round9(spec.radius),
            "n_points": spec.n_points,
            "direction": spec.direction,
            "start_phase": _round9(spec.start_phase),
        },
        "schemes": {},
    }
    for report in reports:
        agg = report.aggregates
        doc["schemes"][report.scheme] = {
            key: (_round9(val) if isinstance(val, float) else val)
            for key, val in agg.items()
        }
    return json.dumps(doc, indent=2) + "\n"


def render_waypoints_csv(reports: list[PathReport]) -> str:
    lines = [",".join(WAYPOINT_COLUMNS)]
    for report in reports:
        for r in report.rows:
            lines.append(",".join([
                report.scheme,
                str(r.index),
                str(int(r.converged)),
                str(r.cycles_used),
                fmt(r.final_error),
                fmt(r.in_plane),
                fmt(r.out_of_plane),
                fmt(r.model_gap),
            ]))
    return "\n".join(lines) + "\n"


def render_cycles_csv(logs_by_scheme: dict[str, list[CycleLog]]) -> str:
    lines = [",".join(CYCLE_COLUMNS)]
    for scheme, logs in logs_by_scheme.items():
        for log in logs:
            psi = log.psi_estimate
            q = log.q_command
            fields = [
                scheme, str(log.waypoint_index), str(log.cycle_index),
                *[fmt(v) for v in log.target],
                *[fmt(v) for v in log.measured_tip],
                *[fmt(v) for v in log.model_tip],
                fmt(psi.theta1), fmt(psi.L1), fmt(psi.delta1),
                fmt(psi.theta2), fmt(psi.L2), fmt(psi.delta2),
                fmt(q.delta1), fmt(q.beta1), fmt(q.gamma1),
                fmt(q.delta2), fmt(q.beta2), fmt(q.gamma2),
                str(int(log.converged)), str(int(log.saturated)),
            ]
            lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
