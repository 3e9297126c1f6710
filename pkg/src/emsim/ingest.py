"""Historical mission ingestion: service-time samples, demand counts, calibration data.

The mission CSV mirrors the dispatch-database field list:

``call_id, ts_call_start, ts_triage_end, ts_assigned, ts_depart,
ts_arrive_scene, ts_depart_scene, ts_arrive_ed, ts_offload_start,
ts_offload_end, ts_mission_end, zone, x, y, triage_tag, onscene_tag, ed_id,
outcome``

Timestamps are sim minutes (minute 0 = Monday 00:00); cells may be empty when
a phase did not occur.  ``outcome`` is one of CancelledEnRoute, ClosedOnSite,
Transported.  An optional trailing ``base_id`` column identifies the dispatch
base; without it base-to-scene calibration observations cannot be derived and
are skipped (the fixed schema does not carry the base).

Phase durations are timestamp differences.  Pre-scene phases classify by the
triage tag; on-scene and later phases by the revised on-scene tag when
present.  The offload interval [ts_offload_start, ts_offload_end] is the
ambulance-blocked (ramping) time, sampled per ED; patient discharge runs from
ts_offload_end to ts_mission_end.  Sanitization leaves no timestamps in the
mission record and cannot be recovered here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import CalibrationObservation, TravelLeg, write_observations_csv
from .demand import CallStatus
from .model import (
    MINUTES_PER_DAY,
    Phase,
    SchemaViolation,
    SeverityTag,
    SimulationInstance,
    URGENCY_ORDER,
    UrgencyClass,
    urgency_of,
)
from .randomness import SampleTooSmall, fit_or_empirical

__all__ = ["MISSION_COLUMNS", "DERIVABLE_PHASES", "IngestError", "IngestResult", "ingest"]

MISSION_COLUMNS = [
    "call_id", "ts_call_start", "ts_triage_end", "ts_assigned", "ts_depart",
    "ts_arrive_scene", "ts_depart_scene", "ts_arrive_ed", "ts_offload_start",
    "ts_offload_end", "ts_mission_end", "zone", "x", "y", "triage_tag",
    "onscene_tag", "ed_id", "outcome",
]

DERIVABLE_PHASES = (
    Phase.TELEPHONE_TRIAGE,
    Phase.AMBULANCE_ASSIGNMENT,
    Phase.AMBULANCE_PREPARATION,
    Phase.TREATMENT_ON_SITE,
    Phase.PATIENT_LOAD,
    Phase.PATIENT_DISCHARGE,
)

_VALID_OUTCOMES = (CallStatus.CANCELLED_EN_ROUTE, CallStatus.CLOSED_ON_SITE,
                   CallStatus.TRANSPORTED)


class IngestError(Exception):
    """Row-independent ingest failure (e.g. a phase has no usable samples)."""


@dataclass
class IngestResult:
    samples: dict                 # (Phase, UrgencyClass) -> list of minutes
    zone_slot_counts: dict        # (zone, slot index) -> count
    observations: list            # CalibrationObservation
    aod: dict                     # ed id -> (n transports, n blocked, delays list)
    audit_lines: list
    fitted: dict                  # (Phase, UrgencyClass) -> DistributionRef
    n_rows: int = 0
    n_unmatched_pairs: int = 0
    written: list = field(default_factory=list)


def _parse_row(path: Path, lineno: int, row: dict) -> dict:
    out = dict(row)
    try:
        out["triage_tag"] = SeverityTag(row["triage_tag"])
        out["onscene_tag"] = SeverityTag(row["onscene_tag"]) if row["onscene_tag"] else None
        if row["outcome"] not in _VALID_OUTCOMES:
            raise ValueError(f"bad outcome {row['outcome']!r}")
        for col in MISSION_COLUMNS[1:11]:
            out[col] = float(row[col]) if row[col] else None
        out["x"] = float(row["x"])
        out["y"] = float(row["y"])
    except (KeyError, ValueError) as exc:
        raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    return out


def _duration(path, lineno, row, start_col, end_col):
    start, end = row[start_col], row[end_col]
    if start is None or end is None:
        return None
    if end < start:
        raise SchemaViolation(
            f"{path}:{lineno}: {end_col} precedes {start_col} ({end} < {start})")
    return end - start


def ingest(mission_path, instance: SimulationInstance, out_dir,
           alpha: float = 0.05) -> IngestResult:
    """Extract everything the simulator needs from a historical mission CSV.

    Writes per-phase sample files, the zone-by-slot count table, the
    calibration observation file, per-ED offload-delay estimates and the fit
    audit log into ``out_dir``.  Raises :class:`IngestError` when a derivable
    phase ends up with no samples for some urgency class.
    """
    mission_path = Path(mission_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    squares = instance.demand.squares
    square_pt = {sid: squares[sid].representative_point for sid in squares}
    pt_coords = {pid: (p.x, p.y) for pid, p in instance.network.points.items()}
    ed_ids = {ed.point for ed in instance.eds}
    scheme = instance.demand.scheme
    slot_of = instance.calibration_slots.slot_of
    nominal = instance.travel.nominal

    samples: dict = {(p, u): [] for p in DERIVABLE_PHASES for u in URGENCY_ORDER}
    zone_slot: dict = {}
    observations: list[CalibrationObservation] = []
    aod: dict = {}
    n_rows = 0
    n_unmatched = 0

    def nearest_square_point(x: float, y: float) -> str:
        best, best_d = None, math.inf
        for sid in sorted(squares):
            px, py = pt_coords[square_pt[sid]]
            d = (px - x) ** 2 + (py - y) ** 2
            if d < best_d:
                best, best_d = square_pt[sid], d
        return best

    with mission_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        has_base = fields == MISSION_COLUMNS + ["base_id"]
        if not has_base and fields != MISSION_COLUMNS:
            raise SchemaViolation(
                f"{mission_path}: expected columns {MISSION_COLUMNS} "
                f"(optionally + base_id), got {fields}")
        for lineno, raw in enumerate(reader, start=2):
            row = _parse_row(mission_path, lineno, raw)
            n_rows += 1
            triage_urg = urgency_of(row["triage_tag"])
            scene_urg = urgency_of(row["onscene_tag"]) if row["onscene_tag"] else triage_urg

            key = (row["zone"], scheme.index_of(row["ts_call_start"] % MINUTES_PER_DAY))
            zone_slot[key] = zone_slot.get(key, 0) + 1

            for phase, a, b in ((Phase.TELEPHONE_TRIAGE, "ts_call_start", "ts_triage_end"),
                                (Phase.AMBULANCE_ASSIGNMENT, "ts_triage_end", "ts_assigned"),
                                (Phase.AMBULANCE_PREPARATION, "ts_assigned", "ts_depart")):
                d = _duration(mission_path, lineno, row, a, b)
                if d is not None:
                    samples[(phase, triage_urg)].append(d)

            scene_d = _duration(mission_path, lineno, row, "ts_arrive_scene", "ts_depart_scene")
            if scene_d is not None:
                if row["outcome"] == CallStatus.CLOSED_ON_SITE:
                    samples[(Phase.TREATMENT_ON_SITE, scene_urg)].append(scene_d)
                elif row["outcome"] == CallStatus.TRANSPORTED:
                    samples[(Phase.PATIENT_LOAD, scene_urg)].append(scene_d)

            if row["outcome"] == CallStatus.TRANSPORTED:
                if row["ed_id"] not in ed_ids:
                    raise SchemaViolation(
                        f"{mission_path}:{lineno}: unknown ed_id {row['ed_id']!r}")
                entry = aod.setdefault(row["ed_id"], [0, 0, []])
                entry[0] += 1
                block = _duration(mission_path, lineno, row, "ts_offload_start", "ts_offload_end")
                if block is not None and block > 0:
                    entry[1] += 1
                    entry[2].append(block)
                discharge = _duration(mission_path, lineno, row, "ts_offload_end", "ts_mission_end")
                if discharge is not None:
                    samples[(Phase.PATIENT_DISCHARGE, scene_urg)].append(discharge)

                leg_time = _duration(mission_path, lineno, row, "ts_depart_scene", "ts_arrive_ed")
                if leg_time is not None and leg_time > 0:
                    origin = nearest_square_point(row["x"], row["y"])
                    t_rs = nominal.get((origin, row["ed_id"], TravelLeg.SCENE_TO_ED.value))
                    if t_rs is None:
                        n_unmatched += 1
                    else:
                        observations.append(CalibrationObservation(
                            TravelLeg.SCENE_TO_ED, slot_of(row["ts_depart_scene"]),
                            scene_urg, t_rs, leg_time))

            if has_base and raw.get("base_id"):
                leg_time = _duration(mission_path, lineno, row, "ts_depart", "ts_arrive_scene")
                if leg_time is not None and leg_time > 0:
                    origin = raw["base_id"]
                    dest = nearest_square_point(row["x"], row["y"])
                    t_rs = nominal.get((origin, dest, TravelLeg.BASE_TO_SCENE.value))
                    if t_rs is None:
                        n_unmatched += 1
                    else:
                        observations.append(CalibrationObservation(
                            TravelLeg.BASE_TO_SCENE, slot_of(row["ts_depart"]),
                            triage_urg, t_rs, leg_time))

    missing = [f"{p.value}/{u.value}" for (p, u), vals in samples.items() if not vals]
    if missing:
        raise IngestError(
            "no samples extracted for: " + ", ".join(sorted(missing))
            + f" ({n_rows} rows read); supply more history or check timestamps")

    result = IngestResult(samples, zone_slot, observations, aod, [], {},
                          n_rows=n_rows, n_unmatched_pairs=n_unmatched)

    samples_dir = out_dir / "samples"
    samples_dir.mkdir(exist_ok=True)
    for (phase, urg), values in sorted(samples.items(),
                                       key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        path = samples_dir / f"{phase.value}_{urg.value}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["minutes"])
            writer.writerows([[repr(v)] for v in values])
        result.written.append(path)
        try:
            result.fitted[(phase, urg)] = fit_or_empirical(
                values, "exponential", alpha, audit=result.audit_lines,
                label=f"{phase.value},{urg.value}")
        except SampleTooSmall:
            result.audit_lines.append(f"{phase.value},{urg.value},too-small,,")

    labels = scheme.labels()
    counts_path = out_dir / "zone_slot_counts.csv"
    with counts_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["zone", *labels])
        zones = sorted({z for z, _ in zone_slot})
        for zone in zones:
            writer.writerow([zone] + [zone_slot.get((zone, i), 0) for i in range(len(labels))])
    result.written.append(counts_path)

    obs_path = out_dir / "calibration_observations.csv"
    write_observations_csv(observations, obs_path)
    result.written.append(obs_path)

    aod_path = out_dir / "ed_aod.csv"
    with aod_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ed_id", "n_transports", "n_blocked", "block_share", "mean_delay_minutes"])
        for ed_id in sorted(aod):
            n, blocked, delays = aod[ed_id]
            share = blocked / n if n else 0.0
            mean_delay = math.fsum(delays) / len(delays) if delays else 0.0
            writer.writerow([ed_id, n, blocked, f"{share:.6f}", f"{mean_delay:.6f}"])
    result.written.append(aod_path)

    audit_path = out_dir / "fit_audit.log"
    audit_path.write_text(
        "\n".join(["phase,urgency,decision,D,critical", *result.audit_lines]) + "\n",
        encoding="utf-8")
    result.written.append(audit_path)

    fitted_path = out_dir / "service_times_fitted.csv"
    with fitted_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phase", "urgency", "n", "kind", "params"])
        for (phase, urg), dist in sorted(result.fitted.items(),
                                         key=lambda kv: (kv[0][0].value, kv[0][1].value)):
            params = ";".join(repr(p) for p in dist.params) if dist.params else f"n={len(dist.values)}"
            writer.writerow([phase.value, urg.value,
                             len(samples[(phase, urg)]), dist.kind, params])
    result.written.append(fitted_path)
    return result
