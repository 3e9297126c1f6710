"""Synthetic instance generator: a self-contained rieti-like case study.

The profile mirrors the structure of the real territory the model was built
for: 5 generation zones with published per-slot annual call counts, a demand
grid of 272 kept squares built from a synthetic historical call cloud, 12
ambulance bases (two vehicles at the central one), 13 emergency departments
of which only one lies inside the territory, and the published travel-time
correction factors.  Everything is generated deterministically from the seed,
so two runs with the same seed produce byte-identical instance directories.
"""

from __future__ import annotations

import math
from pathlib import Path

from .calibration import CalibrationTable, TravelLeg, TravelTimeModel
from .config_load import save_instance
from .demand import CallSquare, DemandModel, DemandTimeSlotScheme, GenerationZone, build_demand_grid
from .model import (
    EDFacility,
    FleetScenario,
    GeoPoint,
    NetworkModel,
    OutcomeModel,
    Phase,
    PointKind,
    ServiceTimeCatalog,
    SeverityTag,
    SeverityTransition,
    SimulationInstance,
    SlotScheme,
    TimeSlot,
    URGENCY_ORDER,
    UrgencyClass,
)
from .randomness import DistributionRef, RngStream

__all__ = ["RIETI_ZONE_COUNTS", "SLOT_LENGTHS_MINUTES", "CORRECTION_FACTORS",
           "URGENT_CALLS", "NON_URGENT_CALLS", "build_rieti_like", "generate"]

# Annual dispatch counts per zone and daily slot driving the interarrival rates.
SLOT_LENGTHS_MINUTES = (420, 300, 360, 360)  # 00-07, 07-12, 12-18, 18-24
RIETI_ZONE_COUNTS = {
    "Antrodoco": (104, 270, 349, 246),
    "Mirtense": (389, 805, 989, 805),
    "Rieti": (839, 1925, 2247, 1742),
    "S_Elpidio": (99, 184, 217, 153),
    "Salario": (353, 640, 814, 704),
}
URGENT_CALLS = 10399
NON_URGENT_CALLS = 1715

N_SQUARES = 272
CELL_AREA_KM2 = 10.0

# Travel-time correction factors per (leg, slot, urgency); other legs default to 1.
_SLOT_IDS = ("weekday_peak", "weekday_offpeak", "weekday_night",
             "weekend_offpeak", "weekend_night")
CORRECTION_FACTORS = {
    (TravelLeg.BASE_TO_SCENE, UrgencyClass.NON_URGENT): (0.904, 0.894, 0.887, 0.902, 0.894),
    (TravelLeg.SCENE_TO_ED, UrgencyClass.NON_URGENT): (0.964, 0.943, 1.064, 0.902, 1.038),
    (TravelLeg.BASE_TO_SCENE, UrgencyClass.URGENT): (0.867, 0.914, 0.920, 0.949, 0.888),
    (TravelLeg.SCENE_TO_ED, UrgencyClass.URGENT): (0.919, 0.868, 0.959, 0.878, 0.993),
}

_ZONE_LAYOUT = {
    # zone id -> (center x, center y, sigma), meters
    "Antrodoco": (47000.0, 34000.0, 7000.0),
    "Mirtense": (12000.0, 18000.0, 6500.0),
    "Rieti": (30000.0, 32000.0, 3500.0),
    "S_Elpidio": (22000.0, 45000.0, 6000.0),
    "Salario": (24000.0, 8000.0, 7000.0),
}

_BASES = (
    ("B01", "Rieti", 29800.0, 31900.0),
    ("B02", "Osteria Nuova", 24500.0, 12000.0),
    ("B03", "Poggio Mirteto", 11500.0, 17500.0),
    ("B04", "Torri in Sabina", 15500.0, 23000.0),
    ("B05", "Borgo S. Pietro", 38000.0, 26000.0),
    ("B06", "Passo Corese", 7000.0, 10000.0),
    ("B07", "Stimigliano Scalo", 9000.0, 24000.0),
    ("B08", "Posta", 40000.0, 42000.0),
    ("B09", "Paganico", 27000.0, 42000.0),
    ("B10", "Magliano", 18000.0, 6000.0),
    ("B11", "Leonessa", 30000.0, 48000.0),
    ("B12", "Amatrice", 52000.0, 44000.0),
)

# One in-territory hub, four spokes at the territory's edge, eight distant
# specialised centres outside it (most transports still reach the hub).
_EDS = (
    ("ED01", "Hub S. Camillo", 30500.0, 31500.0),
    ("ED02", "Spoke Nord", 14000.0, 16000.0),
    ("ED03", "Spoke Tiberina", 6000.0, 24000.0),
    ("ED04", "Spoke Salaria", 20000.0, 4000.0),
    ("ED05", "Spoke Sabina", -2000.0, 20000.0),
    ("ED06", "Specialist A", 0.0, -5000.0),
    ("ED07", "Specialist B", -12000.0, 10000.0),
    ("ED08", "Specialist C", 8000.0, -12000.0),
    ("ED09", "Specialist D", -20000.0, -2000.0),
    ("ED10", "Trauma A", -15000.0, -15000.0),
    ("ED11", "Trauma B", 5000.0, -25000.0),
    ("ED12", "Trauma C", -25000.0, -20000.0),
    ("ED13", "Trauma D", -10000.0, -30000.0),
)

_ED_GROUPS = {
    "general": ("ED01", "ED02", "ED03", "ED04", "ED05"),
    "specialist": ("ED06", "ED07", "ED08", "ED09"),
    "trauma": ("ED10", "ED11", "ED12", "ED13"),
}

_REFERRAL_PROBS = {"general": 0.82, "specialist": 0.10, "trauma": 0.08}


def _travel_minutes(x1: float, y1: float, x2: float, y2: float) -> float:
    # nominal routing time: 50 km/h along a 1.35x winding factor (mountain roads)
    d_km = math.hypot(x2 - x1, y2 - y1) / 1000.0
    return max(1.0, round(d_km * 1.35 * 60.0 / 50.0, 3))


def _weekly_slots() -> SlotScheme:
    peak, offpeak, night = [], [], []
    we_offpeak, we_night = [], []
    for day in range(5):
        base = day * 1440
        peak += [(base + 420, base + 540), (base + 1020, base + 1140)]
        offpeak += [(base + 360, base + 420), (base + 540, base + 1020),
                    (base + 1140, base + 1380)]
        night += [(base, base + 360), (base + 1380, base + 1440)]
    for day in (5, 6):
        base = day * 1440
        we_offpeak.append((base + 360, base + 1380))
        we_night += [(base, base + 360), (base + 1380, base + 1440)]
    return SlotScheme((
        TimeSlot("weekday_peak", tuple(peak)),
        TimeSlot("weekday_offpeak", tuple(offpeak)),
        TimeSlot("weekday_night", tuple(night)),
        TimeSlot("weekend_offpeak", tuple(we_offpeak)),
        TimeSlot("weekend_night", tuple(we_night)),
    ))


def _tag_probs() -> tuple[float, ...]:
    urgent = URGENT_CALLS / (URGENT_CALLS + NON_URGENT_CALLS)
    red = 0.15
    green = 0.12
    return (red, urgent - red, green, (1.0 - urgent) - green)


def _service_times() -> ServiceTimeCatalog:
    U, N = UrgencyClass.URGENT, UrgencyClass.NON_URGENT
    tri = DistributionRef.triangular
    exp = DistributionRef.exponential
    entries = {
        (Phase.TELEPHONE_TRIAGE, U): exp(1.3),
        (Phase.TELEPHONE_TRIAGE, N): exp(2.0),
        (Phase.AMBULANCE_ASSIGNMENT, U): exp(1.0),
        (Phase.AMBULANCE_ASSIGNMENT, N): exp(1.8),
        (Phase.AMBULANCE_PREPARATION, U): tri(1.0, 2.0, 4.0),
        (Phase.AMBULANCE_PREPARATION, N): tri(1.0, 2.5, 5.0),
        (Phase.TREATMENT_ON_SITE, U): tri(8.0, 14.0, 28.0),
        (Phase.TREATMENT_ON_SITE, N): tri(6.0, 12.0, 25.0),
        (Phase.PATIENT_LOAD, U): tri(4.0, 7.0, 14.0),
        (Phase.PATIENT_LOAD, N): tri(3.0, 6.0, 12.0),
        (Phase.PATIENT_DISCHARGE, U): exp(12.0),
        (Phase.PATIENT_DISCHARGE, N): exp(10.0),
        (Phase.SANITIZATION, U): tri(15.0, 25.0, 45.0),
        (Phase.SANITIZATION, N): tri(15.0, 25.0, 45.0),
    }
    return ServiceTimeCatalog(entries)


def build_rieti_like(seed: int = 42) -> tuple[SimulationInstance, list[FleetScenario]]:
    """Build the rieti-like instance in memory; returns (instance, extra scenarios)."""
    stream = RngStream(seed, 0, "synth")

    # synthetic historical call cloud, one point per annual dispatch
    cloud: list[tuple[float, float]] = []
    cloud_zone: list[str] = []
    for zone_id in sorted(RIETI_ZONE_COUNTS):
        cx, cy, sigma = _ZONE_LAYOUT[zone_id]
        for _ in range(sum(RIETI_ZONE_COUNTS[zone_id])):
            cloud.append((round(stream.normal(cx, sigma), 1),
                          round(stream.normal(cy, sigma), 1)))
            cloud_zone.append(zone_id)

    cells = build_demand_grid(cloud, CELL_AREA_KM2)
    # keep exactly N_SQUARES cells: drop the lightest ones, never emptying a zone
    cell_zone = [cloud_zone[c.representative_index] for c in cells]
    zone_cells: dict[str, int] = {}
    for z in cell_zone:
        zone_cells[z] = zone_cells.get(z, 0) + 1
    if len(cells) < N_SQUARES:
        raise RuntimeError(
            f"grid produced {len(cells)} squares; expected at least {N_SQUARES}")
    order = sorted(range(len(cells)), key=lambda i: (cells[i].weight, i))
    dropped = set()
    for i in order:
        if len(cells) - len(dropped) <= N_SQUARES:
            break
        if zone_cells[cell_zone[i]] > 1:
            dropped.add(i)
            zone_cells[cell_zone[i]] -= 1
    kept = [i for i in range(len(cells)) if i not in dropped]

    points: list[GeoPoint] = []
    squares: dict[str, CallSquare] = {}
    weights: dict[str, float] = {}
    for n, i in enumerate(kept, start=1):
        cell = cells[i]
        sid, qid = f"S{n:03d}", f"Q{n:03d}"
        rx, ry = cloud[cell.representative_index]
        points.append(GeoPoint(qid, PointKind.DEMAND_SQUARE, rx, ry))
        squares[sid] = CallSquare(sid, cell_zone[i], qid, CELL_AREA_KM2)
        weights[sid] = float(cell.weight)

    for bid, label, x, y in _BASES:
        points.append(GeoPoint(bid, PointKind.BASE, x, y, label))
    for eid, label, x, y in _EDS:
        points.append(GeoPoint(eid, PointKind.EMERGENCY_DEPT, x, y, label))
    network = NetworkModel.from_points(points)

    coords = {p.id: (p.x, p.y) for p in points}
    base_ids = [b[0] for b in _BASES]
    ed_ids = [e[0] for e in _EDS]
    square_pts = [squares[sid].representative_point for sid in sorted(squares)]

    nominal: dict[tuple[str, str, str], float] = {}

    def add(origins, destinations, leg: TravelLeg) -> None:
        for o in origins:
            x1, y1 = coords[o]
            for d in destinations:
                x2, y2 = coords[d]
                nominal[(o, d, leg.value)] = _travel_minutes(x1, y1, x2, y2)

    add(base_ids, square_pts, TravelLeg.BASE_TO_SCENE)
    add(square_pts, ed_ids, TravelLeg.SCENE_TO_ED)
    add(square_pts, square_pts, TravelLeg.SCENE_TO_SCENE)
    add(ed_ids, square_pts, TravelLeg.ED_TO_SCENE)
    add(square_pts, base_ids, TravelLeg.RETURN_TO_BASE)
    add(ed_ids, base_ids, TravelLeg.RETURN_TO_BASE)

    table_entries = {}
    for (leg, urgency), alphas in CORRECTION_FACTORS.items():
        for slot_id, alpha in zip(_SLOT_IDS, alphas):
            table_entries[(leg, slot_id, urgency)] = (alpha, 50)
    calibration = CalibrationTable(table_entries)
    delta = {TravelLeg.BASE_TO_SCENE: 2.0, TravelLeg.SCENE_TO_SCENE: 2.0,
             TravelLeg.ED_TO_SCENE: 2.0}
    travel = TravelTimeModel(nominal, calibration,
                             delta, {p.id: p.kind for p in points})

    scheme = DemandTimeSlotScheme(((0, 420), (420, 720), (720, 1080), (1080, 1440)))
    tag_probs = _tag_probs()
    referral_groups = tuple(sorted(_REFERRAL_PROBS))
    referral_probs = tuple(_REFERRAL_PROBS[g] for g in referral_groups)
    zones = []
    for zone_id in sorted(RIETI_ZONE_COUNTS):
        counts = RIETI_ZONE_COUNTS[zone_id]
        inter = tuple(
            DistributionRef.exponential(365.0 * length / count)
            for length, count in zip(SLOT_LENGTHS_MINUTES, counts))
        zone_squares = tuple(sid for sid in sorted(squares) if squares[sid].zone == zone_id)
        zone_weights = tuple(weights[sid] for sid in zone_squares)
        zones.append(GenerationZone(zone_id, inter, zone_squares, zone_weights,
                                    tag_probs, referral_groups, referral_probs))
    demand = DemandModel(tuple(zones), squares, scheme)

    eds = []
    for i, eid in enumerate(ed_ids):
        groups = tuple(sorted(g for g, members in _ED_GROUPS.items() if eid in members))
        eds.append(EDFacility(
            point=eid,
            referral_groups=groups,
            aod_probability=round(0.25 + 0.03 * (i % 6), 2),
            aod_delay=DistributionRef.triangular(10.0, 25.0 + 2.0 * (i % 4), 80.0)))

    transition = SeverityTransition({
        SeverityTag.RED: (0.92, 0.06, 0.02, 0.00),
        SeverityTag.YELLOW: (0.05, 0.85, 0.09, 0.01),
        SeverityTag.GREEN: (0.01, 0.10, 0.80, 0.09),
        SeverityTag.WHITE: (0.00, 0.04, 0.16, 0.80),
    })
    outcomes = OutcomeModel({
        SeverityTag.RED: (0.03, 0.10, 0.87),
        SeverityTag.YELLOW: (0.05, 0.25, 0.70),
        SeverityTag.GREEN: (0.06, 0.45, 0.49),
        SeverityTag.WHITE: (0.08, 0.62, 0.30),
    })

    def scenario(name: str, rieti_h24: int) -> FleetScenario:
        allocations = tuple(
            (bid, rieti_h24 if bid == "B01" else 1, 0) for bid in base_ids)
        return FleetScenario(name, allocations, dispatch_threshold_minutes=30.0)

    as_is = scenario("as-is", 2)
    extra = [scenario("rieti-plus-h24", 3), scenario("rieti-minus-h24", 1)]

    instance = SimulationInstance(
        name="rieti-like",
        network=network,
        demand=demand,
        travel=travel,
        calibration_slots=_weekly_slots(),
        service_times=_service_times(),
        eds=tuple(eds),
        severity_transition=transition,
        outcome_model=outcomes,
        sanitize_probability=0.04,
        scenario=as_is,
        horizon_minutes=547200.0,
        warmup_minutes=21600.0,
        replications=30,
        base_seed=seed,
        slot_boundary_policy="resample",
    )
    instance.validate()
    return instance, extra


def generate(profile: str, seed: int, out_dir) -> Path:
    """Generate a complete, loadable synthetic instance directory."""
    if profile != "rieti-like":
        raise ValueError(f"unknown profile {profile!r}; available: rieti-like")
    instance, extra = build_rieti_like(seed)
    return save_instance(instance, Path(out_dir), scenarios=extra)
