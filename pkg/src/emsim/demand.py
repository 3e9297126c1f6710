"""Stochastic call generation: zones, call squares, arrivals, and the demand grid.

Calls are generated with a two-stage spatial hierarchy: a generation zone
(large enough to estimate a per-slot interarrival distribution) fires the
arrival, then a call square inside the zone is drawn proportionally to the
historical spatial density.  The demand grid itself is built from historical
call locations: uniform square cells, empty cells dropped, each kept cell
represented by the real call location nearest its centroid.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .model import (
    MINUTES_PER_DAY,
    CrossRefError,
    InvariantViolation,
    NetworkModel,
    PointKind,
    SeverityTag,
    TAG_ORDER,
    urgency_of,
)
from .randomness import DistributionRef, RngStream, sample

__all__ = [
    "DemandTimeSlotScheme",
    "GenerationZone",
    "CallSquare",
    "DemandModel",
    "EmergencyCall",
    "CallStatus",
    "GridCell",
    "EmptyHistory",
    "next_arrival",
    "pick_square",
    "spawn_call",
    "build_demand_grid",
]


class EmptyHistory(ValueError):
    """Grid construction needs at least one historical call."""


class CallStatus:
    QUEUED = "Queued"
    ASSIGNED = "Assigned"
    EN_ROUTE = "EnRoute"
    SERVED = "Served"
    CANCELLED_EN_ROUTE = "CancelledEnRoute"
    CLOSED_ON_SITE = "ClosedOnSite"
    TRANSPORTED = "Transported"

    TERMINAL = (CANCELLED_EN_ROUTE, CLOSED_ON_SITE, TRANSPORTED)


@dataclass(frozen=True)
class DemandTimeSlotScheme:
    """Partition of the day into [start, end) minute-of-day intervals for arrival rates."""

    boundaries: tuple[tuple[int, int], ...]
    _lookup: tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        cursor = 0
        for start, end in self.boundaries:
            if start != cursor or not start < end:
                raise InvariantViolation(
                    f"demand slots must partition the day in order; bad range [{start}, {end})")
            cursor = end
        if cursor != MINUTES_PER_DAY:
            raise InvariantViolation(f"demand slots cover [0, {cursor}), expected [0, {MINUTES_PER_DAY})")
        lookup = [0] * MINUTES_PER_DAY
        for idx, (start, end) in enumerate(self.boundaries):
            for m in range(start, end):
                lookup[m] = idx
        object.__setattr__(self, "_lookup", tuple(lookup))

    def __len__(self) -> int:
        return len(self.boundaries)

    def index_of(self, sim_minute: float) -> int:
        return self._lookup[int(sim_minute % MINUTES_PER_DAY)]

    def slot_end_absolute(self, sim_minute: float) -> float:
        """Absolute sim minute at which the slot containing ``sim_minute`` ends."""
        day_start = math.floor(sim_minute / MINUTES_PER_DAY) * MINUTES_PER_DAY
        end = self.boundaries[self.index_of(sim_minute)][1]
        return day_start + end

    def labels(self) -> tuple[str, ...]:
        return tuple(f"{s // 60:02d}:{s % 60:02d}-{e // 60:02d}:{e % 60:02d}"
                     for s, e in self.boundaries)


def _cumulative(weights) -> tuple[float, ...]:
    acc = 0.0
    out = []
    for w in weights:
        acc += w
        out.append(acc)
    return tuple(out)


@dataclass(frozen=True)
class GenerationZone:
    """Territorial unit with per-slot interarrival distributions and square weights."""

    id: str
    interarrival: tuple[DistributionRef, ...]  # one per demand slot
    squares: tuple[str, ...]
    square_weights: tuple[float, ...]
    tag_probs: tuple[float, ...]               # in TAG_ORDER
    referral_groups: tuple[str, ...]
    referral_probs: tuple[float, ...]
    _square_cum: tuple[float, ...] = field(default=(), compare=False, repr=False)
    _tag_cum: tuple[float, ...] = field(default=(), compare=False, repr=False)
    _referral_cum: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.squares:
            raise InvariantViolation(f"zone {self.id}: needs at least one square")
        if len(self.squares) != len(self.square_weights):
            raise InvariantViolation(f"zone {self.id}: squares and weights differ in length")
        if any(w <= 0 for w in self.square_weights):
            raise InvariantViolation(f"zone {self.id}: square weights must be positive")
        if len(self.tag_probs) != len(TAG_ORDER) or abs(math.fsum(self.tag_probs) - 1.0) > 1e-9:
            raise InvariantViolation(f"zone {self.id}: tag probabilities must sum to 1")
        if len(self.referral_groups) != len(self.referral_probs) or not self.referral_groups:
            raise InvariantViolation(f"zone {self.id}: bad referral distribution")
        if abs(math.fsum(self.referral_probs) - 1.0) > 1e-9:
            raise InvariantViolation(f"zone {self.id}: referral probabilities must sum to 1")
        object.__setattr__(self, "_square_cum", _cumulative(self.square_weights))
        object.__setattr__(self, "_tag_cum", _cumulative(self.tag_probs))
        object.__setattr__(self, "_referral_cum", _cumulative(self.referral_probs))


@dataclass(frozen=True)
class CallSquare:
    """Small grid cell; carries the representative historical location used for travel."""

    id: str
    zone: str
    representative_point: str
    area_km2: float

    def __post_init__(self) -> None:
        if not self.area_km2 > 0:
            raise InvariantViolation(f"square {self.id}: area must be positive")


@dataclass(frozen=True)
class DemandModel:
    """Zones, squares and the daily slot scheme driving call generation."""

    zones: tuple[GenerationZone, ...]
    squares: dict
    scheme: DemandTimeSlotScheme
    # optional per-square historical locations for the 'empirical' location rule
    square_points: dict = field(default_factory=dict)

    def validate(self, network: NetworkModel) -> None:
        seen_square_zone: dict[str, str] = {}
        for zone in self.zones:
            if len(zone.interarrival) != len(self.scheme):
                raise InvariantViolation(
                    f"zone {zone.id}: expected {len(self.scheme)} interarrival "
                    f"distributions, got {len(zone.interarrival)}")
            for sid in zone.squares:
                if sid not in self.squares:
                    raise CrossRefError(f"zone {zone.id}: unknown square {sid}")
                if sid in seen_square_zone:
                    raise CrossRefError(
                        f"square {sid} belongs to both {seen_square_zone[sid]} and {zone.id}")
                seen_square_zone[sid] = zone.id
        for sid, square in self.squares.items():
            if sid != square.id:
                raise CrossRefError(f"square index key {sid} != square id {square.id}")
            if square.zone not in {z.id for z in self.zones}:
                raise CrossRefError(f"square {sid}: unknown zone {square.zone}")
            if sid not in seen_square_zone:
                raise CrossRefError(f"square {sid} not listed by its zone {square.zone}")
            network.require(square.representative_point, PointKind.DEMAND_SQUARE)

    def zone_by_id(self, zone_id: str) -> GenerationZone:
        for zone in self.zones:
            if zone.id == zone_id:
                return zone
        raise CrossRefError(f"unknown zone {zone_id}")

    def __eq__(self, other) -> bool:
        return (isinstance(other, DemandModel)
                and self.zones == other.zones
                and self.squares == other.squares
                and self.scheme == other.scheme
                and self.square_points == other.square_points)


def next_arrival(zone: GenerationZone, now: float, scheme: DemandTimeSlotScheme,
                 stream: RngStream, policy: str = "keep") -> float:
    """Next call time for ``zone`` after ``now``.

    ``keep``: one draw from the slot containing ``now``; the draw stands even
    if it crosses a slot boundary.  ``resample``: a draw crossing the boundary
    is discarded, the clock moves to the boundary and a fresh draw is taken
    from the next slot's distribution, which for exponential interarrivals
    reproduces the piecewise-homogeneous Poisson process exactly.
    """
    cursor = now
    while True:
        gap = sample(zone.interarrival[scheme.index_of(cursor)], stream)
        nxt = cursor + gap
        if math.isinf(nxt):
            return math.inf
        if policy == "keep":
            return nxt
        boundary = scheme.slot_end_absolute(cursor)
        if nxt < boundary:
            return nxt
        cursor = boundary


def pick_square(zone: GenerationZone, stream: RngStream) -> str:
    """Categorical draw over the zone's squares, proportional to historical counts."""
    u = stream.random() * zone._square_cum[-1]
    idx = bisect_right(zone._square_cum, u)
    return zone.squares[min(idx, len(zone.squares) - 1)]


def _draw_categorical(cum, u: float) -> int:
    idx = bisect_right(cum, u * cum[-1])
    return min(idx, len(cum) - 1)


@dataclass(slots=True)
class EmergencyCall:
    """One emergency call and its full timestamp trail (all times in sim minutes)."""

    call_id: int
    arrival_minute: float
    zone: str
    square: str
    triage_tag: SeverityTag
    pathology_group: str
    location_x: float
    location_y: float
    onscene_tag: SeverityTag | None = None
    status: str = CallStatus.QUEUED
    outcome: str | None = None
    ambulance_id: str | None = None
    home_base: str | None = None
    dispatch_origin: str | None = None
    ed_id: str | None = None
    t_triage_done: float | None = None
    t_assigned: float | None = None
    t_depart_base: float | None = None
    t_arrive_scene: float | None = None
    t_depart_scene: float | None = None
    t_arrive_ed: float | None = None
    t_offload_start: float | None = None
    t_offload_done: float | None = None
    t_mission_end: float | None = None

    def urgency(self):
        return urgency_of(self.triage_tag)


def spawn_call(model: DemandModel, network: NetworkModel, zone: GenerationZone,
               now: float, call_id: int, locations: RngStream,
               attributes: RngStream, location_rule: str = "representative") -> EmergencyCall:
    """Create the call that just fired in ``zone``: square, severity tag, pathology.

    The call location is the square's representative point, or under the
    ``empirical`` rule a random historical location recorded for the square.
    """
    square_id = pick_square(zone, locations)
    square = model.squares[square_id]
    rep = network.require(square.representative_point)
    if location_rule == "empirical" and model.square_points.get(square_id):
        pts = model.square_points[square_id]
        x, y = pts[locations.integers(len(pts))]
    else:
        x, y = rep.x, rep.y
    tag = TAG_ORDER[_draw_categorical(zone._tag_cum, attributes.random())]
    group = zone.referral_groups[_draw_categorical(zone._referral_cum, attributes.random())]
    return EmergencyCall(
        call_id=call_id,
        arrival_minute=now,
        zone=zone.id,
        square=square_id,
        triage_tag=tag,
        pathology_group=group,
        location_x=x,
        location_y=y,
    )


@dataclass(frozen=True)
class GridCell:
    """One kept cell of the demand grid."""

    ix: int
    iy: int
    centroid_x: float
    centroid_y: float
    representative_index: int  # index into the input call list
    weight: int                # historical call count


def build_demand_grid(calls, cell_area_km2: float, bbox=None) -> list[GridCell]:
    """Bucket historical call locations into uniform square cells.

    ``calls`` is a sequence of (x, y) in meters.  Cells with no calls are
    excluded; each kept cell's representative is the call nearest its centroid
    in Euclidean distance (ties to the lowest input index, which is the one
    order-dependence of this construction).  Cell side is sqrt(cell_area_km2).
    """
    if not calls:
        raise EmptyHistory("no historical calls")
    if not cell_area_km2 > 0:
        raise ValueError("cell area must be positive")
    side = math.sqrt(cell_area_km2) * 1000.0
    if bbox is None:
        xmin = min(x for x, _ in calls)
        ymin = min(y for _, y in calls)
        xmax = max(x for x, _ in calls)
        ymax = max(y for _, y in calls)
    else:
        xmin, ymin, xmax, ymax = bbox
    ncols = max(1, math.ceil((xmax - xmin) / side))
    nrows = max(1, math.ceil((ymax - ymin) / side))

    buckets: dict[tuple[int, int], list[int]] = {}
    for idx, (x, y) in enumerate(calls):
        if not (xmin <= x <= xmax and ymin <= y <= ymax):
            raise ValueError(f"call {idx} at ({x}, {y}) outside the bounding box")
        ix = min(int((x - xmin) // side), ncols - 1)
        iy = min(int((y - ymin) // side), nrows - 1)
        buckets.setdefault((ix, iy), []).append(idx)

    cells = []
    for (ix, iy) in sorted(buckets):
        members = buckets[(ix, iy)]
        cx = xmin + (ix + 0.5) * side
        cy = ymin + (iy + 0.5) * side
        best = members[0]
        best_d = (calls[best][0] - cx) ** 2 + (calls[best][1] - cy) ** 2
        for idx in members[1:]:
            d = (calls[idx][0] - cx) ** 2 + (calls[idx][1] - cy) ** 2
            if d < best_d:
                best, best_d = idx, d
        cells.append(GridCell(ix, iy, cx, cy, best, len(members)))
    return cells
