"""Replication manager: runs N independent replications and writes run outputs.

Replications share the immutable instance and nothing else; each derives its
own random streams from (base_seed, replication_index).  They may run in a
worker pool, and results are always assembled in replication-index order, so
output bytes do not depend on the worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .engine import MissionRecord, run_replication
from .kpi import (
    DEFAULT_THRESHOLDS,
    ReplicationSummary,
    SummaryStat,
    summarize,
    summarize_replication,
)
from .model import SimulationInstance, URGENCY_ORDER

__all__ = ["RunResult", "run_many", "write_records_csv", "read_records_csv",
           "write_summary_csvs", "read_rep_coverage_csv", "RECORD_COLUMNS"]

RECORD_COLUMNS = [
    "replication", "call_id", "zone", "square", "arrival_minute",
    "location_x", "location_y", "triage_tag", "onscene_tag", "pathology_group",
    "status", "censored", "in_warmup", "ambulance_id", "home_base",
    "dispatch_origin", "ed_id", "response_time_minutes",
    "ts_triage_done", "ts_assigned", "ts_depart_base", "ts_arrive_scene",
    "ts_depart_scene", "ts_arrive_ed", "ts_offload_start", "ts_offload_done",
    "ts_mission_end",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _record_row(r: MissionRecord) -> list[str]:
    return [
        str(r.replication), str(r.call_id), r.zone, r.square,
        _fmt(r.arrival_minute), _fmt(r.location_x), _fmt(r.location_y),
        r.triage_tag, r.onscene_tag or "", r.pathology_group,
        r.status, "1" if r.censored else "0", "1" if r.in_warmup else "0",
        r.ambulance_id or "", r.home_base or "", r.dispatch_origin or "",
        r.ed_id or "", _fmt(r.response_time_minutes),
        _fmt(r.t_triage_done), _fmt(r.t_assigned), _fmt(r.t_depart_base),
        _fmt(r.t_arrive_scene), _fmt(r.t_depart_scene), _fmt(r.t_arrive_ed),
        _fmt(r.t_offload_start), _fmt(r.t_offload_done), _fmt(r.t_mission_end),
    ]


def write_records_csv(records, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(_record_row(r))


def read_records_csv(path) -> list[MissionRecord]:
    def opt_str(v):
        return v or None

    def opt_float(v):
        return float(v) if v else None

    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(MissionRecord(
                replication=int(row["replication"]),
                call_id=int(row["call_id"]),
                zone=row["zone"], square=row["square"],
                arrival_minute=float(row["arrival_minute"]),
                location_x=float(row["location_x"]),
                location_y=float(row["location_y"]),
                triage_tag=row["triage_tag"],
                onscene_tag=opt_str(row["onscene_tag"]),
                pathology_group=row["pathology_group"],
                status=row["status"],
                censored=row["censored"] == "1",
                in_warmup=row["in_warmup"] == "1",
                ambulance_id=opt_str(row["ambulance_id"]),
                home_base=opt_str(row["home_base"]),
                dispatch_origin=opt_str(row["dispatch_origin"]),
                ed_id=opt_str(row["ed_id"]),
                response_time_minutes=opt_float(row["response_time_minutes"]),
                t_triage_done=opt_float(row["ts_triage_done"]),
                t_assigned=opt_float(row["ts_assigned"]),
                t_depart_base=opt_float(row["ts_depart_base"]),
                t_arrive_scene=opt_float(row["ts_arrive_scene"]),
                t_depart_scene=opt_float(row["ts_depart_scene"]),
                t_arrive_ed=opt_float(row["ts_arrive_ed"]),
                t_offload_start=opt_float(row["ts_offload_start"]),
                t_offload_done=opt_float(row["ts_offload_done"]),
                t_mission_end=opt_float(row["ts_mission_end"]),
            ))
    return records


@dataclass
class RunResult:
    summaries: list            # ReplicationSummary, index order
    records_by_rep: list | None
    coverage_stats: dict       # (urgency, threshold) -> SummaryStat
    base_share_stats: dict     # base -> SummaryStat
    count_stats: dict          # urgency -> SummaryStat
    n_events: int
    violations: list


_WORKER_STATE: dict = {}


def _init_worker(instance, thresholds, tag_basis, record_events, invariant_checks, out_dir):
    _WORKER_STATE.update(instance=instance, thresholds=thresholds, tag_basis=tag_basis,
                         record_events=record_events, invariant_checks=invariant_checks,
                         out_dir=out_dir)


def _run_one(rep_index: int):
    st = _WORKER_STATE
    instance: SimulationInstance = st["instance"]
    result = run_replication(instance, rep_index,
                             record_events=st["record_events"],
                             invariant_checks=st["invariant_checks"])
    summary = summarize_replication(result.records, rep_index,
                                    instance.demand.scheme,
                                    thresholds=st["thresholds"],
                                    tag_basis=st["tag_basis"],
                                    n_events=result.n_events,
                                    violations=result.violations)
    out_dir = st["out_dir"]
    shard = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        if result.event_lines is not None:
            log_path = out_dir / f"events_rep{rep_index:03d}.log"
            log_path.write_text("\n".join(result.event_lines) + "\n", encoding="utf-8")
        shard = out_dir / f"_records_rep{rep_index:03d}.csv"
        write_records_csv(result.records, shard)
    return summary, result.records, shard


def run_many(instance: SimulationInstance, out_dir=None, *, replications: int | None = None,
             jobs: int = 1, thresholds=DEFAULT_THRESHOLDS, tag_basis: str = "triage",
             record_events: bool = True, invariant_checks: bool = False,
             keep_records: bool = False) -> RunResult:
    """Run all replications and aggregate their KPI vectors.

    With ``out_dir`` set, per-replication event logs and the combined
    ``records.csv`` are written there along with the summary CSVs.
    """
    n_reps = instance.replications if replications is None else replications
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    init_args = (instance, tuple(thresholds), tag_basis, record_events,
                 invariant_checks, out_dir)
    outputs = []
    if jobs <= 1 or n_reps <= 1:
        _init_worker(*init_args)
        for i in range(n_reps):
            outputs.append(_run_one(i))
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, n_reps),
                                 initializer=_init_worker,
                                 initargs=init_args) as pool:
            outputs = list(pool.map(_run_one, range(n_reps)))

    summaries = [o[0] for o in outputs]
    records_by_rep = [o[1] for o in outputs] if keep_records else None

    if out_dir is not None:
        combined = out_dir / "records.csv"
        with combined.open("w", newline="", encoding="utf-8") as out_fh:
            out_fh.write(",".join(RECORD_COLUMNS) + "\n")
            for _, _, shard in outputs:
                with shard.open(encoding="utf-8") as fh:
                    next(fh)  # shard header
                    for line in fh:
                        out_fh.write(line)
                shard.unlink()

    coverage_stats = {}
    if len(summaries) >= 2:
        for urgency in URGENCY_ORDER:
            for t in thresholds:
                values = [s.coverage[(urgency, t)][0] for s in summaries]
                coverage_stats[(urgency, t)] = summarize(values)
    bases = sorted({b for s in summaries for b in s.base_shares})
    base_share_stats = {}
    count_stats = {}
    if len(summaries) >= 2:
        for base in bases:
            base_share_stats[base] = summarize(
                [s.base_shares.get(base, 0.0) for s in summaries])
        for urgency in URGENCY_ORDER:
            count_stats[urgency] = summarize(
                [float(s.counts[urgency]) for s in summaries])

    violations = [v for s in summaries for v in s.violations]
    result = RunResult(
        summaries=summaries,
        records_by_rep=records_by_rep,
        coverage_stats=coverage_stats,
        base_share_stats=base_share_stats,
        count_stats=count_stats,
        n_events=sum(s.n_events for s in summaries),
        violations=violations,
    )
    if out_dir is not None:
        write_summary_csvs(result, out_dir, thresholds)
    return result


# ---------------------------------------------------------------------------
# summary CSVs

def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_summary_csvs(result: RunResult, out_dir, thresholds=DEFAULT_THRESHOLDS) -> None:
    out_dir = Path(out_dir)

    rows = []
    for s in result.summaries:
        for urgency in URGENCY_ORDER:
            for t in thresholds:
                pct, n = s.coverage[(urgency, t)]
                rows.append([s.replication_index, urgency.value, _fmt(float(t)),
                             _fmt(pct), n])
    _write_csv(out_dir / "rep_coverage.csv",
               ["replication", "urgency", "threshold_minutes", "coverage_pct", "n_calls"],
               rows)

    rows = [[s.replication_index, base, _fmt(share)]
            for s in result.summaries for base, share in sorted(s.base_shares.items())]
    _write_csv(out_dir / "rep_base_shares.csv",
               ["replication", "base", "share_pct"], rows)

    rows = [[s.replication_index, u.value, s.counts[u]]
            for s in result.summaries for u in URGENCY_ORDER]
    _write_csv(out_dir / "rep_counts.csv", ["replication", "urgency", "n_calls"], rows)

    rows = []
    for (urgency, t), stat in sorted(result.coverage_stats.items(),
                                     key=lambda kv: (kv[0][0].value, kv[0][1])):
        rows.append([urgency.value, _fmt(float(t)), stat.n,
                     _fmt(stat.avg), _fmt(stat.lb), _fmt(stat.ub)])
    _write_csv(out_dir / "coverage_summary.csv",
               ["urgency", "threshold_minutes", "n_replications", "avg", "lb", "ub"], rows)

    rows = [[base, stat.n, _fmt(stat.avg), _fmt(stat.lb), _fmt(stat.ub)]
            for base, stat in sorted(result.base_share_stats.items())]
    _write_csv(out_dir / "base_share_summary.csv",
               ["base", "n_replications", "avg", "lb", "ub"], rows)

    rows = [[u.value, stat.n, _fmt(stat.avg), _fmt(stat.lb), _fmt(stat.ub)]
            for u, stat in sorted(result.count_stats.items(), key=lambda kv: kv[0].value)]
    _write_csv(out_dir / "calls_summary.csv",
               ["urgency", "n_replications", "avg", "lb", "ub"], rows)


def read_rep_coverage_csv(path) -> dict:
    """Read rep_coverage.csv back as {(urgency, threshold): [pct by replication]}."""
    from .model import UrgencyClass

    series: dict = {}
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["replication"]), UrgencyClass(row["urgency"]),
                         float(row["threshold_minutes"]), float(row["coverage_pct"])))
    rows.sort(key=lambda r: (r[0], r[1].value, r[2]))
    for rep, urgency, threshold, pct in rows:
        series.setdefault((urgency, threshold), []).append(pct)
    return series
