"""Instance loading and saving: one YAML root document referencing CSV data files.

File formats (all CSV files carry a header row, UTF-8, ``.`` decimals, ``,``
delimiter, LF line endings):

* ``points.csv``: ``id,kind,x,y,label`` with kind in {Base, DemandSquare,
  EmergencyDept}; coordinates in planar meters.
* ``travel_times.csv``: ``origin,destination,leg,minutes`` nominal
  routing-service times per leg.
* ``calibration_slots.csv``: ``slot_id,start_minute,end_minute`` minute-of-week
  [start, end) ranges; several rows may share a slot_id.
* ``calibration_table.csv``: ``leg,slot,urgency,alpha,n_obs`` (optional; missing
  entries default to alpha = 1).
* ``squares.csv``: ``square_id,zone,representative_point,area_km2,weight``.
* ``square_points.csv``: ``square_id,x,y`` historical call locations (optional,
  used by the ``empirical`` location rule).
* empirical sample files: one ``minutes`` column.

Distributions appear in YAML as ``{kind: constant|exponential|triangular|
empirical, ...}`` with ``value``, ``mean``, ``low/mode/high`` or
``sample_file``, plus optional ``truncate_at_zero``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import yaml

from . import calibration as cal
from .demand import CallSquare, DemandModel, DemandTimeSlotScheme, GenerationZone
from .model import (
    ConfigError,
    CrossRefError,
    DEFAULT_H12_WINDOW,
    EDFacility,
    FleetScenario,
    GeoPoint,
    InvariantViolation,
    MissingFile,
    NetworkModel,
    OUTCOME_ORDER,
    OutcomeModel,
    Phase,
    PointKind,
    SchemaViolation,
    ServiceTimeCatalog,
    SeverityTag,
    SeverityTransition,
    SimulationInstance,
    SlotScheme,
    TAG_ORDER,
    TimeSlot,
    URGENCY_ORDER,
    UrgencyClass,
)
from .randomness import DistributionRef

__all__ = ["load_instance", "save_instance", "parse_distribution",
           "distribution_to_mapping", "file_digest"]

_OUTCOME_KEYS = ("cancel_en_route", "treat_on_site", "transport")


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require_file(path: Path) -> Path:
    if not path.is_file():
        raise MissingFile(str(path))
    return path


def _read_csv(path: Path, expected_header: list[str]):
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected_header:
            raise SchemaViolation(
                f"{path}: expected header {expected_header}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def parse_distribution(spec, base_dir: Path, digests: list) -> DistributionRef:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SchemaViolation(f"distribution spec must be a mapping with 'kind': {spec!r}")
    kind = spec["kind"]
    truncate = bool(spec.get("truncate_at_zero", False))
    try:
        if kind == "constant":
            value = spec["value"]
            value = math.inf if value == "inf" else float(value)
            return DistributionRef("constant", (value,), truncate_at_zero=truncate)
        if kind == "exponential":
            return DistributionRef("exponential", (float(spec["mean"]),),
                                   truncate_at_zero=truncate)
        if kind == "triangular":
            return DistributionRef(
                "triangular",
                (float(spec["low"]), float(spec["mode"]), float(spec["high"])),
                truncate_at_zero=truncate)
        if kind == "empirical":
            sample_path = _require_file(base_dir / spec["sample_file"])
            digests.append(sample_path)
            values = [float(row["minutes"]) for _, row in _read_csv(sample_path, ["minutes"])]
            if not values:
                raise SchemaViolation(f"{sample_path}: empty sample")
            return DistributionRef("empirical", values=tuple(sorted(values)),
                                   truncate_at_zero=truncate)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad distribution spec {spec!r}: {exc}") from None
    raise SchemaViolation(f"unknown distribution kind {kind!r}")


def distribution_to_mapping(dist: DistributionRef, sample_file: str | None = None) -> dict:
    out: dict = {"kind": dist.kind}
    if dist.kind == "constant":
        out["value"] = "inf" if math.isinf(dist.params[0]) else dist.params[0]
    elif dist.kind == "exponential":
        out["mean"] = dist.params[0]
    elif dist.kind == "triangular":
        out["low"], out["mode"], out["high"] = dist.params
    else:
        if sample_file is None:
            raise ValueError("empirical distribution needs a sample_file to serialize")
        out["sample_file"] = sample_file
    if dist.truncate_at_zero:
        out["truncate_at_zero"] = True
    return out


def _load_points(path: Path) -> NetworkModel:
    points = []
    for lineno, row in _read_csv(path, ["id", "kind", "x", "y", "label"]):
        try:
            points.append(GeoPoint(row["id"], PointKind(row["kind"]),
                                   float(row["x"]), float(row["y"]), row["label"]))
        except ValueError as exc:
            raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    if not points:
        raise SchemaViolation(f"{path}: no points")
    return NetworkModel.from_points(points)


def _load_travel_times(path: Path) -> dict:
    nominal = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["origin", "destination", "leg", "minutes"]:
            raise SchemaViolation(f"{path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                origin, destination, leg, minutes = row
                nominal[(origin, destination, cal.TravelLeg(leg).value)] = float(minutes)
            except ValueError as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    return nominal


def _load_calibration_slots(path: Path) -> SlotScheme:
    ranges: dict[str, list[tuple[int, int]]] = {}
    order: list[str] = []
    for lineno, row in _read_csv(path, ["slot_id", "start_minute", "end_minute"]):
        try:
            slot_id = row["slot_id"]
            if slot_id not in ranges:
                ranges[slot_id] = []
                order.append(slot_id)
            ranges[slot_id].append((int(row["start_minute"]), int(row["end_minute"])))
        except ValueError as exc:
            raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    slots = tuple(TimeSlot(slot_id, tuple(ranges[slot_id])) for slot_id in order)
    return SlotScheme(slots)


def _load_squares(path: Path):
    squares: dict[str, CallSquare] = {}
    weights: dict[str, float] = {}
    for lineno, row in _read_csv(path, ["square_id", "zone", "representative_point",
                                        "area_km2", "weight"]):
        try:
            square = CallSquare(row["square_id"], row["zone"],
                                row["representative_point"], float(row["area_km2"]))
            weights[square.id] = float(row["weight"])
        except ValueError as exc:
            raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
        if square.id in squares:
            raise SchemaViolation(f"{path}:{lineno}: duplicate square {square.id}")
        squares[square.id] = square
    return squares, weights


def _load_square_points(path: Path) -> dict:
    points: dict[str, list[tuple[float, float]]] = {}
    for lineno, row in _read_csv(path, ["square_id", "x", "y"]):
        try:
            points.setdefault(row["square_id"], []).append((float(row["x"]), float(row["y"])))
        except ValueError as exc:
            raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    return {sid: tuple(pts) for sid, pts in points.items()}


def _parse_zone(raw, scheme_len: int, squares, weights, base_dir, digests) -> GenerationZone:
    try:
        zone_id = raw["id"]
        inter = tuple(parse_distribution(spec, base_dir, digests)
                      for spec in raw["interarrival"])
        tags = raw["tags"]
        tag_probs = tuple(float(tags.get(tag.value, 0.0)) for tag in TAG_ORDER)
        referral = raw["referral"]
        groups = tuple(sorted(referral))
        referral_probs = tuple(float(referral[g]) for g in groups)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"zone entry {raw!r}: {exc}") from None
    zone_squares = tuple(sid for sid in sorted(squares) if squares[sid].zone == zone_id)
    if not zone_squares:
        raise CrossRefError(f"zone {zone_id}: no squares reference it")
    zone_weights = tuple(weights[sid] for sid in zone_squares)
    return GenerationZone(zone_id, inter, zone_squares, zone_weights,
                          tag_probs, groups, referral_probs)


def _parse_service_times(raw, sanitization_duration, base_dir, digests) -> ServiceTimeCatalog:
    entries = {}
    for phase in Phase:
        block = raw.get(phase.value)
        if block is None and phase == Phase.SANITIZATION and sanitization_duration is not None:
            for urg in URGENCY_ORDER:
                entries[(phase, urg)] = sanitization_duration
            continue
        if block is None:
            raise SchemaViolation(f"service_times missing phase {phase.value}")
        for urg in URGENCY_ORDER:
            if urg.value not in block:
                raise SchemaViolation(f"service_times[{phase.value}] missing {urg.value}")
            entries[(phase, urg)] = parse_distribution(block[urg.value], base_dir, digests)
    return ServiceTimeCatalog(entries)


def _parse_scenarios(raw) -> list[FleetScenario]:
    scenarios = []
    for entry in raw:
        try:
            allocations = tuple(
                (a["base"], int(a.get("h24", 0)), int(a.get("h12", 0)))
                for a in entry["allocations"])
            overrides = tuple(
                (UrgencyClass(k), float(v))
                for k, v in sorted(entry.get("threshold_overrides", {}).items()))
            scenarios.append(FleetScenario(
                name=entry["name"],
                allocations=allocations,
                dispatch_threshold_minutes=float(entry["dispatch_threshold_minutes"]),
                threshold_overrides=overrides))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"scenario entry {entry!r}: {exc}") from None
    return scenarios


def load_instance(config_path, scenario: str | None = None) -> SimulationInstance:
    """Load, cross-check and validate a full simulation instance.

    ``scenario`` picks one of the named fleet scenarios; the default is the
    first one in the file.
    """
    config_path = _require_file(Path(config_path))
    base_dir = config_path.parent
    digest_paths: list[Path] = [config_path]
    try:
        raw = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SchemaViolation(f"{config_path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaViolation(f"{config_path}: root document must be a mapping")

    try:
        files = raw["files"]
        points_path = _require_file(base_dir / files["points"])
        travel_path = _require_file(base_dir / files["travel_times"])
        slots_path = _require_file(base_dir / files["calibration_slots"])
        squares_path = _require_file(base_dir / files["squares"])
    except KeyError as exc:
        raise SchemaViolation(f"{config_path}: missing top-level key {exc}") from None
    digest_paths += [points_path, travel_path, slots_path, squares_path]

    network = _load_points(points_path)
    nominal = _load_travel_times(travel_path)
    slot_scheme = _load_calibration_slots(slots_path)
    squares, weights = _load_squares(squares_path)

    table = cal.CalibrationTable.empty()
    if files.get("calibration_table"):
        table_path = _require_file(base_dir / files["calibration_table"])
        digest_paths.append(table_path)
        table = cal.read_table_csv(table_path)
    square_points = {}
    if files.get("square_points"):
        sp_path = _require_file(base_dir / files["square_points"])
        digest_paths.append(sp_path)
        square_points = _load_square_points(sp_path)

    delta = {}
    for leg_name, value in (raw.get("travel_noise_delta") or {}).items():
        try:
            delta[cal.TravelLeg(leg_name)] = float(value)
        except ValueError as exc:
            raise SchemaViolation(f"travel_noise_delta: {exc}") from None
    point_kinds = {pid: p.kind for pid, p in network.points.items()}
    travel_model = cal.TravelTimeModel(nominal, table, delta, point_kinds)

    try:
        boundaries = tuple((int(s), int(e)) for s, e in raw["demand_slots"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"demand_slots: {exc}") from None
    scheme = DemandTimeSlotScheme(boundaries)

    zones = tuple(_parse_zone(z, len(scheme), squares, weights, base_dir, digest_paths)
                  for z in raw.get("zones", []))
    if not zones:
        raise SchemaViolation("at least one zone is required")
    demand = DemandModel(zones, squares, scheme, square_points)

    sanitization = raw.get("sanitization") or {}
    try:
        sanitize_probability = float(sanitization.get("probability", 0.0))
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"sanitization.probability: {exc}") from None
    sanitization_duration = None
    if "duration" in sanitization:
        sanitization_duration = parse_distribution(sanitization["duration"],
                                                   base_dir, digest_paths)
    catalog = _parse_service_times(raw.get("service_times") or {},
                                   sanitization_duration, base_dir, digest_paths)

    eds = []
    for entry in raw.get("eds", []):
        try:
            eds.append(EDFacility(
                point=entry["point"],
                referral_groups=tuple(sorted(entry["groups"])),
                aod_probability=float(entry["aod_probability"]),
                aod_delay=parse_distribution(entry["aod_delay"], base_dir, digest_paths)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"ed entry {entry!r}: {exc}") from None

    def _rows(block, keys, ctor):
        rows = {}
        for tag in TAG_ORDER:
            entry = block.get(tag.value)
            if entry is None:
                raise SchemaViolation(f"{ctor}: missing row for {tag.value}")
            rows[tag] = tuple(float(entry.get(k, 0.0)) for k in keys)
        return rows

    transition = SeverityTransition(_rows(raw.get("severity_transition") or {},
                                          [t.value for t in TAG_ORDER],
                                          "severity_transition"))
    outcomes = OutcomeModel(_rows(raw.get("outcome_model") or {},
                                  list(_OUTCOME_KEYS), "outcome_model"))

    scenario_list = _parse_scenarios(raw.get("scenarios") or [])
    if not scenario_list:
        raise SchemaViolation("at least one scenario is required")
    if scenario is None:
        selected = scenario_list[0]
    else:
        matches = [s for s in scenario_list if s.name == scenario]
        if not matches:
            raise CrossRefError(
                f"unknown scenario {scenario!r}; available: {[s.name for s in scenario_list]}")
        selected = matches[0]

    h12_window = tuple(raw.get("h12_window", DEFAULT_H12_WINDOW))
    digests = tuple(sorted((str(p.relative_to(base_dir)), file_digest(p))
                           for p in set(digest_paths)))
    instance = SimulationInstance(
        name=str(raw.get("name", config_path.stem)),
        network=network,
        demand=demand,
        travel=travel_model,
        calibration_slots=slot_scheme,
        service_times=catalog,
        eds=tuple(eds),
        severity_transition=transition,
        outcome_model=outcomes,
        sanitize_probability=sanitize_probability,
        scenario=selected,
        horizon_minutes=float(raw.get("horizon_minutes", 547200.0)),
        warmup_minutes=float(raw.get("warmup_minutes", 21600.0)),
        replications=int(raw.get("replications", 30)),
        base_seed=int(raw.get("base_seed", 1)),
        h12_window=(int(h12_window[0]), int(h12_window[1])),
        location_rule=str(raw.get("location_rule", "representative")),
        slot_boundary_policy=str(raw.get("slot_boundary_policy", "keep")),
        input_digests=digests,
    )
    instance.validate()
    # keep the full scenario list reachable for CLI listings
    object.__setattr__(instance, "_all_scenarios", tuple(scenario_list))
    return instance


def available_scenarios(instance: SimulationInstance):
    return getattr(instance, "_all_scenarios", (instance.scenario,))


# ---------------------------------------------------------------------------
# serialization (round-trip counterpart of load_instance)

def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def save_instance(instance: SimulationInstance, out_dir,
                  scenarios=None, config_name: str = "config.yaml") -> Path:
    """Write an instance directory that load_instance reads back identically.

    ``scenarios`` may list additional fleet scenarios to keep in the config
    beyond the instance's selected one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_dir = out_dir / "samples"

    points = sorted(instance.network.points.values(), key=lambda p: p.id)
    _write_csv(out_dir / "points.csv", ["id", "kind", "x", "y", "label"],
               [[p.id, p.kind.value, repr(p.x), repr(p.y), p.label] for p in points])

    travel_rows = [[o, d, leg, repr(minutes)]
                   for (o, d, leg), minutes in sorted(instance.travel.nominal.items())]
    _write_csv(out_dir / "travel_times.csv", ["origin", "destination", "leg", "minutes"],
               travel_rows)

    slot_rows = []
    for slot in instance.calibration_slots.slots:
        for start, end in slot.ranges:
            slot_rows.append([slot.id, start, end])
    _write_csv(out_dir / "calibration_slots.csv",
               ["slot_id", "start_minute", "end_minute"], slot_rows)

    files_block = {
        "points": "points.csv",
        "travel_times": "travel_times.csv",
        "calibration_slots": "calibration_slots.csv",
        "squares": "squares.csv",
    }
    if len(instance.travel.calibration):
        cal.write_table_csv(instance.travel.calibration, out_dir / "calibration_table.csv")
        files_block["calibration_table"] = "calibration_table.csv"
    if instance.demand.square_points:
        rows = []
        for sid in sorted(instance.demand.square_points):
            for x, y in instance.demand.square_points[sid]:
                rows.append([sid, repr(x), repr(y)])
        _write_csv(out_dir / "square_points.csv", ["square_id", "x", "y"], rows)
        files_block["square_points"] = "square_points.csv"

    weight_by_square = {}
    for zone in instance.demand.zones:
        for sid, w in zip(zone.squares, zone.square_weights):
            weight_by_square[sid] = w
    square_rows = []
    for sid in sorted(instance.demand.squares):
        sq = instance.demand.squares[sid]
        square_rows.append([sq.id, sq.zone, sq.representative_point,
                            repr(sq.area_km2), repr(weight_by_square[sid])])
    _write_csv(out_dir / "squares.csv",
               ["square_id", "zone", "representative_point", "area_km2", "weight"],
               square_rows)

    sample_counter = 0

    def dist_map(dist: DistributionRef) -> dict:
        nonlocal sample_counter
        if dist.kind == "empirical":
            sample_counter += 1
            samples_dir.mkdir(exist_ok=True)
            rel = f"samples/sample_{sample_counter:03d}.csv"
            _write_csv(out_dir / rel, ["minutes"], [[repr(v)] for v in dist.values])
            return distribution_to_mapping(dist, rel)
        return distribution_to_mapping(dist)

    zones_block = []
    for zone in instance.demand.zones:
        zones_block.append({
            "id": zone.id,
            "interarrival": [dist_map(d) for d in zone.interarrival],
            "tags": {tag.value: p for tag, p in zip(TAG_ORDER, zone.tag_probs)},
            "referral": {g: p for g, p in zip(zone.referral_groups, zone.referral_probs)},
        })

    service_block = {}
    for phase in Phase:
        service_block[phase.value] = {
            urg.value: dist_map(instance.service_times.get(phase, urg))
            for urg in URGENCY_ORDER}

    eds_block = [{
        "point": ed.point,
        "groups": list(ed.referral_groups),
        "aod_probability": ed.aod_probability,
        "aod_delay": dist_map(ed.aod_delay),
    } for ed in instance.eds]

    def scenario_map(s: FleetScenario) -> dict:
        entry = {
            "name": s.name,
            "dispatch_threshold_minutes": s.dispatch_threshold_minutes,
            "allocations": [{"base": b, "h24": n24, "h12": n12}
                            for b, n24, n12 in s.allocations],
        }
        if s.threshold_overrides:
            entry["threshold_overrides"] = {u.value: m for u, m in s.threshold_overrides}
        return entry

    all_scenarios = [instance.scenario] + [
        s for s in (scenarios or []) if s.name != instance.scenario.name]

    doc = {
        "name": instance.name,
        "horizon_minutes": instance.horizon_minutes,
        "warmup_minutes": instance.warmup_minutes,
        "replications": instance.replications,
        "base_seed": instance.base_seed,
        "h12_window": list(instance.h12_window),
        "location_rule": instance.location_rule,
        "slot_boundary_policy": instance.slot_boundary_policy,
        "files": files_block,
        "demand_slots": [list(b) for b in instance.demand.scheme.boundaries],
        "travel_noise_delta": {leg.value: d for leg, d in
                               sorted(instance.travel.delta.items(),
                                      key=lambda kv: kv[0].value)},
        "zones": zones_block,
        "eds": eds_block,
        "service_times": service_block,
        "severity_transition": {
            tag.value: {t.value: p for t, p in
                        zip(TAG_ORDER, instance.severity_transition.row(tag))}
            for tag in TAG_ORDER},
        "outcome_model": {
            tag.value: {k: p for k, p in
                        zip(_OUTCOME_KEYS, instance.outcome_model.row(tag))}
            for tag in TAG_ORDER},
        "sanitization": {"probability": instance.sanitize_probability},
        "scenarios": [scenario_map(s) for s in all_scenarios],
    }
    config_path = out_dir / config_name
    config_path.write_text(yaml.safe_dump(doc, sort_keys=False, allow_unicode=True),
                           encoding="utf-8")
    return config_path
