"""Batch command-line interface.

Subcommands::

    emsim synth     --profile rieti-like --seed S --out DIR
    emsim simulate  CONFIG [--scenario NAME] [--replications N] [--seed S]
                    --out DIR [--jobs J] [--horizon-minutes H]
                    [--warmup-minutes W] [--no-event-logs] [--invariant-checks]
    emsim calibrate OBSERVATIONS.csv --slots SLOTS.csv --out DIR
                    [--min-count 5] [--ratio-lo 0.2] [--ratio-hi 5.0]
    emsim ingest    MISSIONS.csv --config CONFIG --out DIR [--alpha 0.05]
    emsim compare   BASELINE_DIR ALTERNATIVE_DIR --out DIR
    emsim validate  RESULTS_DIR --targets TARGETS.csv [--tolerance 3.0]

The environment variable ``EMSIM_SEED`` overrides ``--seed``.  Every command
writes a ``manifest.json`` into its output directory with content digests of
every input file; reruns with identical inputs and flags reproduce every
output byte except the manifest's wall-clock fields.

Exit codes: 0 success; 2 validation failure (historical targets missed,
mismatched comparison runs, unusable ingest data); 3 schema or input error;
4 internal invariant breach.

Additional file formats owned by this module:

* ``targets.csv``: ``kpi,target`` where kpi is ``calls:<urgency>``,
  ``coverage:<urgency>:<threshold>`` or ``base_share:<base id>``.
* ``paired_t.csv``: ``urgency,threshold_minutes,mean_diff,ci_lo,ci_hi,verdict``.
* ``scorecard.csv``: ``baseline,alternative,improvements,worsenings``.
* ``validation_report.csv``: per-KPI gaps against targets and pass/fail.
* event logs: one line per fired event,
  ``time_minute,seq,kind,call_id,ambulance_id`` with 6-decimal times.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

from . import __version__
from .calibration import (
    DEFAULT_MIN_COUNT,
    DEFAULT_RATIO_BOUNDS,
    TravelLeg,
    build_table,
    read_observations_csv,
    write_table_csv,
)
from .config_load import _load_calibration_slots, file_digest, load_instance
from .ingest import IngestError, ingest
from .kpi import (
    DEFAULT_THRESHOLDS,
    URGENCY_ORDER,
    UrgencyClass,
    paired_t,
    scenario_scorecard,
    validate_against_history,
)
from .model import ConfigError
from .replication import read_rep_coverage_csv, run_many
from .synth import generate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SCHEMA = 3
EXIT_INTERNAL = 4


class ComparisonMismatch(Exception):
    """Baseline and alternative runs are not pairwise comparable."""


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(out_dir: Path, command: str, inputs, extra: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": {str(p): file_digest(p) for p in sorted(set(map(Path, inputs)))},
        **extra,
    }
    manifest["started_at"] = extra.get("started_at", _utc_now())
    manifest["finished_at"] = _utc_now()
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_manifest(results_dir: Path) -> dict:
    path = results_dir / "manifest.json"
    if not path.is_file():
        raise ComparisonMismatch(f"{results_dir} has no manifest.json")
    return json.loads(path.read_text(encoding="utf-8"))


def _resolve_seed(args_seed) -> int | None:
    env = os.environ.get("EMSIM_SEED")
    if env is not None:
        return int(env)
    return args_seed


def _instance_hash(instance) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, digest in instance.input_digests:
        h.update(f"{name}:{digest};".encode())
    h.update(f"scenario={instance.scenario.name};".encode())
    h.update(f"horizon={instance.horizon_minutes};warmup={instance.warmup_minutes};".encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# subcommands

def _cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    out_dir = Path(args.out)
    started = _utc_now()
    config_path = generate(args.profile, seed if seed is not None else 42, out_dir)
    _write_manifest(out_dir, "synth", [config_path],
                    {"profile": args.profile, "base_seed": seed if seed is not None else 42,
                     "started_at": started})
    print(f"synth: wrote {config_path}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    started = _utc_now()
    instance = load_instance(args.config, scenario=args.scenario)
    overrides = {}
    seed = _resolve_seed(args.seed)
    if seed is not None:
        overrides["base_seed"] = seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.horizon_minutes is not None:
        overrides["horizon_minutes"] = args.horizon_minutes
    if args.warmup_minutes is not None:
        overrides["warmup_minutes"] = args.warmup_minutes
    if overrides:
        import dataclasses

        instance = dataclasses.replace(instance, **overrides)
        instance.validate()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_many(
        instance, out_dir,
        jobs=args.jobs,
        record_events=not args.no_event_logs,
        invariant_checks=args.invariant_checks,
    )
    config_dir = Path(args.config).parent
    inputs = [config_dir / name for name, _ in instance.input_digests]
    _write_manifest(out_dir, "simulate", inputs, {
        "instance_hash": _instance_hash(instance),
        "scenario": instance.scenario.name,
        "base_seed": instance.base_seed,
        "replications": instance.replications,
        "horizon_minutes": instance.horizon_minutes,
        "warmup_minutes": instance.warmup_minutes,
        "jobs": args.jobs,
        "n_events": result.n_events,
        "started_at": started,
    })
    if result.violations:
        for v in result.violations[:20]:
            print(f"invariant violation: {v}", file=sys.stderr)
        return EXIT_INTERNAL
    print(f"simulate: {instance.replications} replication(s) of "
          f"{instance.scenario.name} -> {out_dir}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    started = _utc_now()
    observations = read_observations_csv(args.observations)
    scheme = _load_calibration_slots(Path(args.slots))
    grid = [(leg, slot, urg)
            for leg in (TravelLeg.BASE_TO_SCENE, TravelLeg.SCENE_TO_ED)
            for slot in scheme.slot_ids()
            for urg in URGENCY_ORDER]
    table, report = build_table(observations, min_count=args.min_count,
                                ratio_bounds=(args.ratio_lo, args.ratio_hi), grid=grid)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table_csv(table, out_dir / "calibration_table.csv")
    with (out_dir / "defaulted_groups.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("leg,slot,urgency\n")
        for leg, slot, urg in sorted(report.defaulted,
                                     key=lambda k: (k[0].value, k[1], k[2].value)):
            fh.write(f"{leg.value},{slot},{urg.value}\n")
    _write_manifest(out_dir, "calibrate", [args.observations, args.slots],
                    {"min_count": args.min_count,
                     "ratio_bounds": [args.ratio_lo, args.ratio_hi],
                     "started_at": started})
    print(f"calibrate: {report.summary()}")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    started = _utc_now()
    instance = load_instance(args.config)
    out_dir = Path(args.out)
    result = ingest(args.missions, instance, out_dir, alpha=args.alpha)
    _write_manifest(out_dir, "ingest", [args.missions, args.config],
                    {"alpha": args.alpha, "n_rows": result.n_rows,
                     "n_unmatched_pairs": result.n_unmatched_pairs,
                     "started_at": started})
    print(f"ingest: {result.n_rows} missions -> {len(result.written)} files in {out_dir}")
    return EXIT_OK


def _load_run_for_compare(results_dir: Path):
    manifest = _read_manifest(results_dir)
    series = read_rep_coverage_csv(results_dir / "rep_coverage.csv")
    return manifest, series


def _cmd_compare(args) -> int:
    started = _utc_now()
    base_dir, alt_dir = Path(args.baseline), Path(args.alternative)
    base_manifest, base_series = _load_run_for_compare(base_dir)
    alt_manifest, alt_series = _load_run_for_compare(alt_dir)
    if base_manifest.get("base_seed") != alt_manifest.get("base_seed"):
        raise ComparisonMismatch(
            f"seed mismatch: {base_manifest.get('base_seed')} vs "
            f"{alt_manifest.get('base_seed')} (common random numbers required)")
    if base_manifest.get("replications") != alt_manifest.get("replications"):
        raise ComparisonMismatch(
            f"replication count mismatch: {base_manifest.get('replications')} vs "
            f"{alt_manifest.get('replications')}")

    comparisons = {}
    rows = []
    for urgency in URGENCY_ORDER:
        for threshold in DEFAULT_THRESHOLDS:
            key = (urgency, threshold)
            entry = paired_t(base_series[key], alt_series[key], urgency, threshold)
            comparisons[key] = entry.verdict
            rows.append(entry)
    improvements, worsenings = scenario_scorecard(comparisons)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "paired_t.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("urgency,threshold_minutes,mean_diff,ci_lo,ci_hi,verdict\n")
        for e in rows:
            fh.write(f"{e.urgency.value},{e.threshold_minutes:.6f},{e.mean_diff:.6f},"
                     f"{e.ci_lo:.6f},{e.ci_hi:.6f},{e.verdict}\n")
    with (out_dir / "scorecard.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("baseline,alternative,improvements,worsenings\n")
        fh.write(f"{base_manifest.get('scenario', base_dir.name)},"
                 f"{alt_manifest.get('scenario', alt_dir.name)},"
                 f"{improvements},{worsenings}\n")
    _write_manifest(out_dir, "compare",
                    [base_dir / "rep_coverage.csv", alt_dir / "rep_coverage.csv"],
                    {"base_seed": base_manifest.get("base_seed"),
                     "replications": base_manifest.get("replications"),
                     "started_at": started})
    print(f"compare: {improvements} significant improvements, "
          f"{worsenings} significant worsenings")
    return EXIT_OK


def _parse_targets(path: Path) -> dict:
    import csv as _csv

    targets = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames != ["kpi", "target"]:
            raise ConfigError(f"{path}: expected header ['kpi', 'target']")
        for row in reader:
            targets[row["kpi"]] = float(row["target"])
    return targets


def _collect_stats(results_dir: Path) -> dict:
    import csv as _csv

    from .kpi import SummaryStat

    stats: dict = {}

    def read(name, key_fn):
        path = results_dir / name
        if not path.is_file():
            return
        with path.open(newline="", encoding="utf-8") as fh:
            for row in _csv.DictReader(fh):
                stats[key_fn(row)] = SummaryStat(
                    float(row["avg"]), float(row["lb"]), float(row["ub"]),
                    int(row["n_replications"]))

    read("calls_summary.csv", lambda r: f"calls:{r['urgency']}")
    read("coverage_summary.csv",
         lambda r: f"coverage:{r['urgency']}:{float(r['threshold_minutes']):g}")
    read("base_share_summary.csv", lambda r: f"base_share:{r['base']}")
    return stats


def _cmd_validate(args) -> int:
    started = _utc_now()
    results_dir = Path(args.results)
    targets = _parse_targets(Path(args.targets))
    stats = _collect_stats(results_dir)
    rows, overall = validate_against_history(stats, targets, tolerance_pct=args.tolerance)
    out_dir = Path(args.out) if args.out else results_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / "validation_report.csv"
    with report.open("w", encoding="utf-8", newline="") as fh:
        fh.write("kpi,target,avg,lb,ub,gap_lb,gap_ub,passed\n")
        for r in rows:
            fh.write(f"{r.kpi},{r.target:.6f},{r.avg:.6f},{r.lb:.6f},{r.ub:.6f},"
                     f"{r.gap_lb:.6f},{r.gap_ub:.6f},{'pass' if r.passed else 'fail'}\n")
    _write_manifest(out_dir, "validate", [args.targets],
                    {"tolerance_pct": args.tolerance,
                     "overall": "pass" if overall else "fail",
                     "started_at": started})
    for r in rows:
        print(f"validate: {r.kpi}: gaps {r.gap_lb:.4f}/{r.gap_ub:.4f} "
              f"{'pass' if r.passed else 'FAIL'}")
    return EXIT_OK if overall else EXIT_VALIDATION


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emsim",
        description="Discrete-event simulator for regional ambulance emergency systems")
    parser.add_argument("--version", action="version", version=f"emsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic instance directory")
    p.add_argument("--profile", default="rieti-like")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("simulate", help="run replications and write KPI outputs")
    p.add_argument("config")
    p.add_argument("--scenario", default=None)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--horizon-minutes", type=float, default=None)
    p.add_argument("--warmup-minutes", type=float, default=None)
    p.add_argument("--no-event-logs", action="store_true")
    p.add_argument("--invariant-checks", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="estimate travel-time correction factors")
    p.add_argument("observations")
    p.add_argument("--slots", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT)
    p.add_argument("--ratio-lo", type=float, default=DEFAULT_RATIO_BOUNDS[0])
    p.add_argument("--ratio-hi", type=float, default=DEFAULT_RATIO_BOUNDS[1])
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("ingest", help="extract model inputs from historical missions")
    p.add_argument("missions")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("compare", help="paired-t comparison of two simulate runs")
    p.add_argument("baseline")
    p.add_argument("alternative")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate", help="check simulated KPIs against historical targets")
    p.add_argument("results")
    p.add_argument("--targets", required=True)
    p.add_argument("--tolerance", type=float, default=3.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ComparisonMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
