"""Domain model: points, severity scale, time slots, fleet, and the simulation instance.

Everything here is immutable after construction.  A validated
:class:`SimulationInstance` is safe to share read-only across concurrently
running replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from .randomness import DistributionRef

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .calibration import TravelTimeModel
    from .demand import DemandModel

MINUTES_PER_DAY = 1440
MINUTES_PER_WEEK = 10080

DEFAULT_H12_WINDOW = (480, 1200)  # 08:00 - 20:00


class ConfigError(Exception):
    """Base class for configuration and input problems."""


class MissingFile(ConfigError):
    pass


class SchemaViolation(ConfigError):
    pass


class CrossRefError(ConfigError):
    pass


class InvariantViolation(ConfigError):
    pass


class PointKind(str, Enum):
    BASE = "Base"
    DEMAND_SQUARE = "DemandSquare"
    EMERGENCY_DEPT = "EmergencyDept"


class SeverityTag(str, Enum):
    """Four-colour severity scale, most to least urgent."""

    RED = "Red"
    YELLOW = "Yellow"
    GREEN = "Green"
    WHITE = "White"


TAG_ORDER = (SeverityTag.RED, SeverityTag.YELLOW, SeverityTag.GREEN, SeverityTag.WHITE)
# rank 0 = most urgent; used for queue priority and total ordering
TAG_RANK = {tag: i for i, tag in enumerate(TAG_ORDER)}


class UrgencyClass(str, Enum):
    URGENT = "Urgent"
    NON_URGENT = "NonUrgent"


URGENCY_ORDER = (UrgencyClass.URGENT, UrgencyClass.NON_URGENT)


def urgency_of(tag: SeverityTag) -> UrgencyClass:
    """Red and yellow tags are urgent; green and white are non-urgent."""
    if tag in (SeverityTag.RED, SeverityTag.YELLOW):
        return UrgencyClass.URGENT
    return UrgencyClass.NON_URGENT


class Phase(str, Enum):
    """Service-time phases of a mission."""

    TELEPHONE_TRIAGE = "TelephoneTriage"
    AMBULANCE_ASSIGNMENT = "AmbulanceAssignment"
    AMBULANCE_PREPARATION = "AmbulancePreparation"
    TREATMENT_ON_SITE = "TreatmentOnSite"
    PATIENT_LOAD = "PatientLoad"
    PATIENT_DISCHARGE = "PatientDischarge"
    SANITIZATION = "Sanitization"


@dataclass(frozen=True)
class GeoPoint:
    """A network node: ambulance base, demand square point, or emergency department.

    Coordinates are planar meters (UTM-like) and are used only for grid
    construction and reporting; all travel is taken from the travel-time
    tables, never recomputed from coordinates.
    """

    id: str
    kind: PointKind
    x: float
    y: float
    label: str = ""


@dataclass(frozen=True)
class TimeSlot:
    """A named set of disjoint [start, end) minute-of-week intervals."""

    id: str
    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for start, end in self.ranges:
            if not (0 <= start < end <= MINUTES_PER_WEEK):
                raise InvariantViolation(
                    f"slot {self.id}: range [{start}, {end}) outside the week")
        spans = sorted(self.ranges)
        for (_, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise InvariantViolation(f"slot {self.id}: overlapping ranges")


def validate_week_partition(slots) -> list[str]:
    """Check that the slots partition the week [0, 10080) exactly once.

    Returns a list of human-readable diagnostics; an empty list means the
    partition is valid.  Never raises.
    """
    if not slots:
        return ["no slots defined"]
    marks: list[tuple[int, int, str]] = []
    for slot in slots:
        for start, end in slot.ranges:
            marks.append((start, end, slot.id))
    marks.sort()
    problems: list[str] = []
    cursor = 0
    prev_id = None
    for start, end, slot_id in marks:
        if start > cursor:
            problems.append(f"gap [{cursor}, {start})")
        elif start < cursor:
            problems.append(
                f"overlap [{start}, {min(end, cursor)}) between {prev_id} and {slot_id}")
        cursor = max(cursor, end)
        prev_id = slot_id
    if cursor < MINUTES_PER_WEEK:
        problems.append(f"gap [{cursor}, {MINUTES_PER_WEEK})")
    return problems


@dataclass(frozen=True)
class SlotScheme:
    """Week partition into named slots with O(1) minute-of-week lookup."""

    slots: tuple[TimeSlot, ...]
    _lookup: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        problems = validate_week_partition(self.slots)
        if problems:
            raise InvariantViolation("slots do not partition the week: " + "; ".join(problems))
        lookup = [""] * MINUTES_PER_WEEK
        for slot in self.slots:
            for start, end in slot.ranges:
                for m in range(start, end):
                    lookup[m] = slot.id
        object.__setattr__(self, "_lookup", tuple(lookup))

    def slot_of(self, sim_minute: float) -> str:
        return self._lookup[int(sim_minute) % MINUTES_PER_WEEK]

    def slot_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots)


@dataclass(frozen=True)
class AmbulanceSpec:
    """One vehicle of the fleet, fixed to a home base and a shift schedule."""

    id: str
    home_base: str
    schedule: str  # "H24" or "H12"
    on_minute: int = DEFAULT_H12_WINDOW[0]
    off_minute: int = DEFAULT_H12_WINDOW[1]
    vehicle_class: str = "BLS"

    def __post_init__(self) -> None:
        if self.schedule not in ("H24", "H12"):
            raise InvariantViolation(f"ambulance {self.id}: schedule must be H24 or H12")
        if self.schedule == "H12" and not (0 <= self.on_minute < self.off_minute <= MINUTES_PER_DAY):
            raise InvariantViolation(f"ambulance {self.id}: bad H12 window")

    def on_shift(self, sim_minute: float) -> bool:
        if self.schedule == "H24":
            return True
        minute_of_day = sim_minute % MINUTES_PER_DAY
        return self.on_minute <= minute_of_day < self.off_minute


@dataclass(frozen=True)
class EDFacility:
    """Emergency department with referral-group membership and offload-delay model."""

    point: str
    referral_groups: tuple[str, ...]
    aod_probability: float
    aod_delay: DistributionRef

    def __post_init__(self) -> None:
        if not self.referral_groups:
            raise InvariantViolation(f"ED {self.point}: must belong to at least one referral group")
        if not (0.0 <= self.aod_probability <= 1.0):
            raise InvariantViolation(f"ED {self.point}: aod_probability outside [0, 1]")


@dataclass(frozen=True)
class FleetScenario:
    """A deployment to evaluate: per-base ambulance counts plus the dispatch threshold."""

    name: str
    allocations: tuple[tuple[str, int, int], ...]  # (base id, n H24, n H12)
    dispatch_threshold_minutes: float
    threshold_overrides: tuple[tuple[UrgencyClass, float], ...] = ()

    def __post_init__(self) -> None:
        if self.dispatch_threshold_minutes <= 0:
            raise InvariantViolation(f"scenario {self.name}: dispatch threshold must be positive")
        total = 0
        for base, n24, n12 in self.allocations:
            if n24 < 0 or n12 < 0:
                raise InvariantViolation(f"scenario {self.name}: negative count at base {base}")
            total += n24 + n12
        if total < 1:
            raise InvariantViolation(f"scenario {self.name}: fleet must contain at least one vehicle")

    def threshold_for(self, urgency: UrgencyClass) -> float:
        for urg, minutes in self.threshold_overrides:
            if urg == urgency:
                return minutes
        return self.dispatch_threshold_minutes

    def build_units(self, h12_window: tuple[int, int] = DEFAULT_H12_WINDOW) -> tuple[AmbulanceSpec, ...]:
        """Materialize the fleet, one spec per vehicle, ids in allocation order."""
        units = []
        counter = 0
        on_minute, off_minute = h12_window
        for base, n24, n12 in self.allocations:
            for _ in range(n24):
                counter += 1
                units.append(AmbulanceSpec(f"U{counter:03d}", base, "H24"))
            for _ in range(n12):
                counter += 1
                units.append(AmbulanceSpec(f"U{counter:03d}", base, "H12",
                                           on_minute=on_minute, off_minute=off_minute))
        return tuple(units)


@dataclass(frozen=True)
class ServiceTimeCatalog:
    """Per (phase, urgency class) duration distributions; all 14 entries required."""

    entries: dict

    def __post_init__(self) -> None:
        for phase in Phase:
            for urg in URGENCY_ORDER:
                if (phase, urg) not in self.entries:
                    raise InvariantViolation(
                        f"service-time catalog missing {phase.value}/{urg.value}")

    def get(self, phase: Phase, urgency: UrgencyClass) -> DistributionRef:
        return self.entries[(phase, urgency)]

    def __eq__(self, other) -> bool:
        return isinstance(other, ServiceTimeCatalog) and self.entries == other.entries


def _validate_row_stochastic(name: str, rows: dict, size: int, tol: float = 1e-9) -> None:
    for key, probs in rows.items():
        if len(probs) != size:
            raise InvariantViolation(f"{name}[{key}]: expected {size} probabilities")
        if any(p < 0 for p in probs):
            raise InvariantViolation(f"{name}[{key}]: negative probability")
        total = math.fsum(probs)
        if abs(total - 1.0) > tol:
            raise InvariantViolation(f"{name}[{key}]: probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class SeverityTransition:
    """Row-stochastic matrix P(on-scene tag | triage tag), rows in TAG_ORDER."""

    rows: dict

    def __post_init__(self) -> None:
        for tag in TAG_ORDER:
            if tag not in self.rows:
                raise InvariantViolation(f"severity transition missing row for {tag.value}")
        _validate_row_stochastic("severity_transition", self.rows, len(TAG_ORDER))

    def row(self, tag: SeverityTag) -> tuple[float, ...]:
        return self.rows[tag]

    @classmethod
    def identity(cls) -> "SeverityTransition":
        rows = {}
        for i, tag in enumerate(TAG_ORDER):
            probs = [0.0] * len(TAG_ORDER)
            probs[i] = 1.0
            rows[tag] = tuple(probs)
        return cls(rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, SeverityTransition) and self.rows == other.rows


# fixed draw order for mission outcomes
OUTCOME_CANCEL = "CancelledEnRoute"
OUTCOME_ONSITE = "TreatOnSite"
OUTCOME_TRANSPORT = "Transport"
OUTCOME_ORDER = (OUTCOME_CANCEL, OUTCOME_ONSITE, OUTCOME_TRANSPORT)


@dataclass(frozen=True)
class OutcomeModel:
    """Per on-scene tag: P(cancel en route), P(treat on site), P(transport)."""

    rows: dict

    def __post_init__(self) -> None:
        for tag in TAG_ORDER:
            if tag not in self.rows:
                raise InvariantViolation(f"outcome model missing row for {tag.value}")
        _validate_row_stochastic("outcome_model", self.rows, len(OUTCOME_ORDER))

    def row(self, tag: SeverityTag) -> tuple[float, ...]:
        return self.rows[tag]

    def __eq__(self, other) -> bool:
        return isinstance(other, OutcomeModel) and self.rows == other.rows


@dataclass(frozen=True)
class NetworkModel:
    """All geographic points, indexed by id; ids are unique across kinds."""

    points: dict

    def __post_init__(self) -> None:
        for pid, point in self.points.items():
            if pid != point.id:
                raise CrossRefError(f"point index key {pid} != point id {point.id}")

    @classmethod
    def from_points(cls, points) -> "NetworkModel":
        index: dict[str, GeoPoint] = {}
        for point in points:
            if point.id in index:
                raise CrossRefError(f"duplicate point id {point.id}")
            index[point.id] = point
        return cls(index)

    def of_kind(self, kind: PointKind) -> tuple[GeoPoint, ...]:
        return tuple(p for p in self.points.values() if p.kind == kind)

    def require(self, pid: str, kind: PointKind | None = None) -> GeoPoint:
        try:
            point = self.points[pid]
        except KeyError:
            raise CrossRefError(f"unknown point id {pid}") from None
        if kind is not None and point.kind != kind:
            raise CrossRefError(f"point {pid} has kind {point.kind.value}, expected {kind.value}")
        return point

    def __eq__(self, other) -> bool:
        return isinstance(other, NetworkModel) and self.points == other.points


@dataclass(frozen=True)
class SimulationInstance:
    """Everything one replication needs, fully validated and immutable.

    ``sanitize_probability`` gates the post-mission sanitization branch; the
    sanitization duration itself lives in the service-time catalog like every
    other phase.
    """

    name: str
    network: NetworkModel
    demand: "DemandModel"
    travel: "TravelTimeModel"
    calibration_slots: SlotScheme
    service_times: ServiceTimeCatalog
    eds: tuple[EDFacility, ...]
    severity_transition: SeverityTransition
    outcome_model: OutcomeModel
    sanitize_probability: float
    scenario: FleetScenario
    horizon_minutes: float
    warmup_minutes: float
    replications: int
    base_seed: int
    h12_window: tuple[int, int] = DEFAULT_H12_WINDOW
    location_rule: str = "representative"
    slot_boundary_policy: str = "keep"
    input_digests: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def units(self) -> tuple[AmbulanceSpec, ...]:
        return self.scenario.build_units(self.h12_window)

    def ed_by_point(self, point_id: str) -> EDFacility:
        for ed in self.eds:
            if ed.point == point_id:
                return ed
        raise CrossRefError(f"no ED at point {point_id}")

    def validate(self) -> None:
        """Check every cross-reference and invariant; raises on the first failure."""
        net = self.network
        if not (0.0 <= self.sanitize_probability <= 1.0):
            raise InvariantViolation("sanitize probability outside [0, 1]")
        if not (0 <= self.warmup_minutes < self.horizon_minutes):
            raise InvariantViolation("need 0 <= warmup_minutes < horizon_minutes")
        if self.replications < 1:
            raise InvariantViolation("replications must be >= 1")
        if self.location_rule not in ("representative", "empirical"):
            raise InvariantViolation(f"unknown location rule {self.location_rule!r}")
        if self.slot_boundary_policy not in ("keep", "resample"):
            raise InvariantViolation(f"unknown slot boundary policy {self.slot_boundary_policy!r}")

        groups_with_ed: set[str] = set()
        for ed in self.eds:
            net.require(ed.point, PointKind.EMERGENCY_DEPT)
            groups_with_ed.update(ed.referral_groups)
        if not self.eds:
            raise InvariantViolation("at least one ED is required")

        for base, _, _ in self.scenario.allocations:
            net.require(base, PointKind.BASE)

        self.demand.validate(net)
        for zone in self.demand.zones:
            for group in zone.referral_groups:
                if group not in groups_with_ed:
                    raise CrossRefError(
                        f"zone {zone.id}: referral group {group} has no eligible ED")

        self._validate_travel_completeness()

    def _validate_travel_completeness(self) -> None:
        """Every pair the engine may query must exist; no silent fallbacks later."""
        from .calibration import TravelLeg  # local import to avoid a cycle

        nominal = self.travel.nominal
        bases = [b for b, _, _ in self.scenario.allocations]
        squares = [self.demand.squares[sid].representative_point
                   for sid in sorted(self.demand.squares)]
        ed_points = [ed.point for ed in self.eds]

        def check(origins, destinations, leg):
            for o in origins:
                for d in destinations:
                    if (o, d, leg.value) not in nominal:
                        raise CrossRefError(
                            f"travel table missing ({o}, {d}, {leg.value})")

        check(bases, squares, TravelLeg.BASE_TO_SCENE)
        check(squares, ed_points, TravelLeg.SCENE_TO_ED)
        check(squares, squares, TravelLeg.SCENE_TO_SCENE)
        check(ed_points, squares, TravelLeg.ED_TO_SCENE)
        check(squares, bases, TravelLeg.RETURN_TO_BASE)
        check(ed_points, bases, TravelLeg.RETURN_TO_BASE)
