"""Run metrics and plot-ready CSV output.

Everything here is computed from trace records only, so metrics derived from
a trace CSV written by `write_trace_csv` match the in-memory ones exactly.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from src.platoon_sim import LeaderProfile, SimEvent, TraceRecord
from src.thresholds import ModeLabel, VehicleParams, in_equilibrium

logger = logging.getLogger(__name__)

TRACE_HEADER = [
    "t",
    "id",
    "pos_m",
    "v_mps",
    "a_mps2",
    "mode",
    "x1_m",
    "x2_mps",
    "x3_mps",
    "alpha_t",
    "v_bar_mps",
    "theta_m2ps2",
]
EVENTS_HEADER = ["t", "kind", "id", "detail"]
PHASE_HEADER = ["x2_mps", "x1_m"]

# Acceleration magnitude that counts as a reaction to a leader event, m/s^2.
ONSET_THRESHOLD = 0.5

# |x2| below which a sampled follower counts as settled for the oscillation
# metrics, m/s. Sliding along a band edge only reaches x2 = 0 asymptotically.
SETTLE_TOL = 0.1


@dataclass
class MetricsReport:
    min_separation: Dict[int, float] = field(default_factory=dict)
    collision_count: int = 0
    decel_event_t: Optional[float] = None
    accel_event_t: Optional[float] = None
    decel_onset: Dict[int, Optional[float]] = field(default_factory=dict)
    accel_onset: Dict[int, Optional[float]] = field(default_factory=dict)
    oscillations: Dict[int, int] = field(default_factory=dict)
    peak_x2_post_eq: Dict[int, Optional[float]] = field(default_factory=dict)
    peak_accel: Dict[int, float] = field(default_factory=dict)
    dwell: Dict[int, Dict[str, float]] = field(default_factory=dict)
    alpha_mean: Dict[int, float] = field(default_factory=dict)
    alpha_max: Dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        """JSON-friendly view with string keys."""

        def keyed(d):
            return {str(k): v for k, v in d.items()}

        data = asdict(self)
        return {k: keyed(v) if isinstance(v, dict) else v for k, v in data.items()}

    def to_text(self) -> str:
        """The `key = value` report format."""
        lines = [
            f"collision_count = {self.collision_count}",
            f"decel_event_s = {_fmt(self.decel_event_t)}",
            f"accel_event_s = {_fmt(self.accel_event_t)}",
        ]
        for vid, value in sorted(self.min_separation.items()):
            lines.append(f"min_separation_m.{vid} = {_fmt(value)}")
        per_vehicle = [
            ("decel_onset_s", self.decel_onset),
            ("accel_onset_s", self.accel_onset),
            ("oscillations", self.oscillations),
            ("peak_x2_post_eq_mps", self.peak_x2_post_eq),
            ("peak_abs_a_mps2", self.peak_accel),
            ("alpha_t_mean", self.alpha_mean),
            ("alpha_t_max", self.alpha_max),
        ]
        for name, values in per_vehicle:
            for vid, value in sorted(values.items()):
                lines.append(f"{name}.{vid} = {_fmt(value)}")
        for vid, modes in sorted(self.dwell.items()):
            for label in ModeLabel:
                lines.append(f"dwell_s.{vid}.{label.value} = {_fmt(modes.get(label.value, 0.0))}")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _by_vehicle(traces: Iterable[TraceRecord]) -> Dict[int, List[TraceRecord]]:
    grouped: Dict[int, List[TraceRecord]] = defaultdict(list)
    for row in traces:
        grouped[row.id].append(row)
    for rows in grouped.values():
        rows.sort(key=lambda r: r.t)
    return dict(sorted(grouped.items()))


def _onset(rows: Sequence[TraceRecord], event_t: Optional[float], sign: int) -> Optional[float]:
    if event_t is None:
        return None
    for row in rows:
        if row.t + 1e-9 >= event_t and row.acceleration * sign >= ONSET_THRESHOLD:
            return row.t
    return None


def _post_equilibrium(
    rows: Sequence[TraceRecord], params: VehicleParams, settle_tol: float
) -> tuple[int, Optional[float]]:
    start = None
    for i, row in enumerate(rows):
        if in_equilibrium(row.state, params, row.alpha_t, settle_tol):
            start = i
            break
    if start is None:
        return 0, None

    tail = rows[start:]
    changes = 0
    last_sign = 0
    for row in tail:
        if abs(row.x2) <= settle_tol:
            continue
        sign = 1 if row.x2 > 0 else -1
        if last_sign and sign != last_sign:
            changes += 1
        last_sign = sign
    peak = max(abs(row.x2) for row in tail)
    return changes, peak


def compute_metrics(
    traces: Sequence[TraceRecord],
    params_by_id: Mapping[int, VehicleParams],
    profile: LeaderProfile,
    sample_dt: float,
    settle_tol: float = SETTLE_TOL,
) -> MetricsReport:
    report = MetricsReport(
        decel_event_t=profile.first_change(-1),
        accel_event_t=profile.first_change(+1),
    )
    grouped = _by_vehicle(traces)
    leader_id = min(grouped) if grouped else None

    for vid, rows in grouped.items():
        p = params_by_id[vid]
        accels = np.array([r.acceleration for r in rows])
        alphas = np.array([r.alpha_t for r in rows])
        report.decel_onset[vid] = _onset(rows, report.decel_event_t, -1)
        report.accel_onset[vid] = _onset(rows, report.accel_event_t, +1)
        report.peak_accel[vid] = float(np.abs(accels).max())
        report.alpha_mean[vid] = float(alphas.mean())
        report.alpha_max[vid] = float(alphas.max())

        counts: Dict[str, int] = defaultdict(int)
        for row in rows:
            counts[row.mode.value] += 1
        report.dwell[vid] = {label: n * sample_dt for label, n in sorted(counts.items())}

        if vid == leader_id:
            continue
        min_x1 = min(r.x1 for r in rows)
        report.min_separation[vid] = min_x1
        if min_x1 < p.s_n:
            report.collision_count += 1
        report.oscillations[vid], report.peak_x2_post_eq[vid] = _post_equilibrium(rows, p, settle_tol)

    return report


def _delta(on, off) -> Optional[float]:
    if on is None and off is None:
        return 0.0
    if on is None or off is None:
        return None
    return float(on - off)


def delta_table(on: MetricsReport, off: MetricsReport) -> List[dict]:
    """Per-vehicle differences VDT-on minus VDT-off."""
    rows = []
    for vid in sorted(set(on.peak_accel) | set(off.peak_accel)):
        rows.append(
            {
                "id": vid,
                "decel_onset_on": on.decel_onset.get(vid),
                "decel_onset_off": off.decel_onset.get(vid),
                "decel_onset_delta": _delta(on.decel_onset.get(vid), off.decel_onset.get(vid)),
                "oscillations_delta": _delta(on.oscillations.get(vid), off.oscillations.get(vid)),
                "peak_abs_a_delta": _delta(on.peak_accel.get(vid), off.peak_accel.get(vid)),
            }
        )
    return rows


def format_delta_table(rows: Sequence[dict]) -> str:
    header = f"{'id':>3} {'onset_on':>10} {'onset_off':>10} {'d_onset':>9} {'d_osc':>6} {'d_peak_a':>9}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['id']:>3} {_short(row['decel_onset_on']):>10} {_short(row['decel_onset_off']):>10} "
            f"{_short(row['decel_onset_delta']):>9} {_short(row['oscillations_delta']):>6} "
            f"{_short(row['peak_abs_a_delta']):>9}"
        )
    return "\n".join(lines)


def _short(value) -> str:
    if value is None:
        return "-"
    return f"{value:.2f}" if isinstance(value, float) else str(value)


def write_trace_csv(path: Path | str, traces: Iterable[TraceRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in traces:
            writer.writerow(
                [
                    repr(r.t),
                    r.id,
                    repr(r.position),
                    repr(r.speed),
                    repr(r.acceleration),
                    r.mode.value,
                    repr(r.x1),
                    repr(r.x2),
                    repr(r.x3),
                    repr(r.alpha_t),
                    repr(r.v_bar),
                    repr(r.theta),
                ]
            )
    return path


def load_trace_csv(path: Path | str) -> List[TraceRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            TraceRecord(
                t=float(row["t"]),
                id=int(row["id"]),
                position=float(row["pos_m"]),
                speed=float(row["v_mps"]),
                acceleration=float(row["a_mps2"]),
                mode=ModeLabel.from_code(row["mode"]),
                x1=float(row["x1_m"]),
                x2=float(row["x2_mps"]),
                x3=float(row["x3_mps"]),
                alpha_t=float(row["alpha_t"]),
                v_bar=float(row["v_bar_mps"]),
                theta=float(row["theta_m2ps2"]),
            )
            for row in reader
        ]


def write_events_csv(path: Path | str, events: Iterable[SimEvent]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EVENTS_HEADER)
        for e in events:
            writer.writerow([repr(e.t), e.kind, "" if e.vehicle_id is None else e.vehicle_id, e.detail])
    return path


def write_phase_portraits(out_dir: Path | str, traces: Iterable[TraceRecord]) -> List[Path]:
    """One `x2_mps,x1_m` file per follower."""
    out_dir = Path(out_dir)
    grouped = _by_vehicle(traces)
    if not grouped:
        return []
    leader_id = min(grouped)
    paths = []
    for vid, rows in grouped.items():
        if vid == leader_id:
            continue
        path = out_dir / f"phase_portrait_{vid}.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(PHASE_HEADER)
            for r in rows:
                writer.writerow([repr(r.x2), repr(r.x1)])
        paths.append(path)
    return paths


def write_metrics_report(path: Path | str, report: MetricsReport) -> Path:
    path = Path(path)
    path.write_text(report.to_text(), encoding="utf-8")
    return path
