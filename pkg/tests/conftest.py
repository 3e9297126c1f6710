"""Shared fixtures: a hand-traceable deterministic instance and the synthetic case study."""

from __future__ import annotations

import dataclasses
import math

import pytest

from emsim.calibration import CalibrationTable, TravelLeg, TravelTimeModel
from emsim.demand import CallSquare, DemandModel, DemandTimeSlotScheme, GenerationZone
from emsim.model import (
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
)
from emsim.randomness import DistributionRef
from emsim.synth import build_rieti_like

CONST = DistributionRef.constant

# deterministic service times used by the hand traces:
# triage 1, assignment 1, preparation 2, on-site treatment 10, patient load 3,
# discharge 5, sanitization 7
TRACE_PHASES = {
    Phase.TELEPHONE_TRIAGE: 1.0,
    Phase.AMBULANCE_ASSIGNMENT: 1.0,
    Phase.AMBULANCE_PREPARATION: 2.0,
    Phase.TREATMENT_ON_SITE: 10.0,
    Phase.PATIENT_LOAD: 3.0,
    Phase.PATIENT_DISCHARGE: 5.0,
    Phase.SANITIZATION: 7.0,
}


def outcome_rows(cancel=0.0, onsite=1.0, transport=0.0) -> OutcomeModel:
    return OutcomeModel({tag: (cancel, onsite, transport) for tag in SeverityTag})


def make_trace_instance(**overrides) -> SimulationInstance:
    """1 base, 1 H24 ambulance, 2 squares, 1 ED, all service times constant.

    Travel minutes: base->square 5, square->ED 4, square->square 4,
    ED->square 4, square->base 5, ED->base 6.  No calibration, no noise.
    Zone arrivals are off (Constant(inf)); tests inject scripted calls.
    """
    points = [
        GeoPoint("B1", PointKind.BASE, 0.0, 0.0, "base"),
        GeoPoint("Q1", PointKind.DEMAND_SQUARE, 1000.0, 0.0),
        GeoPoint("Q2", PointKind.DEMAND_SQUARE, 2000.0, 0.0),
        GeoPoint("E1", PointKind.EMERGENCY_DEPT, 3000.0, 0.0, "hospital"),
    ]
    network = NetworkModel.from_points(points)
    nominal = {}
    for sq in ("Q1", "Q2"):
        nominal[("B1", sq, "BaseToScene")] = 5.0
        nominal[(sq, "E1", "SceneToED")] = 4.0
        nominal[(sq, "B1", "ReturnToBase")] = 5.0
        nominal[("E1", sq, "EDToScene")] = 4.0
    nominal[("Q1", "Q2", "SceneToScene")] = 4.0
    nominal[("Q2", "Q1", "SceneToScene")] = 4.0
    nominal[("Q1", "Q1", "SceneToScene")] = 1.0
    nominal[("Q2", "Q2", "SceneToScene")] = 1.0
    nominal[("E1", "B1", "ReturnToBase")] = 6.0
    travel = TravelTimeModel(nominal, CalibrationTable.empty(), {},
                             {p.id: p.kind for p in points})

    squares = {
        "S1": CallSquare("S1", "Z", "Q1", 10.0),
        "S2": CallSquare("S2", "Z", "Q2", 10.0),
    }
    zone = GenerationZone(
        id="Z",
        interarrival=(CONST(math.inf),),
        squares=("S1", "S2"),
        square_weights=(1.0, 1.0),
        tag_probs=(0.0, 1.0, 0.0, 0.0),  # always Yellow
        referral_groups=("g1",),
        referral_probs=(1.0,),
    )
    demand = DemandModel((zone,), squares, DemandTimeSlotScheme(((0, 1440),)))

    catalog = ServiceTimeCatalog({
        (phase, urg): CONST(minutes)
        for phase, minutes in TRACE_PHASES.items() for urg in URGENCY_ORDER})

    instance = SimulationInstance(
        name="trace",
        network=network,
        demand=demand,
        travel=travel,
        calibration_slots=SlotScheme((TimeSlot("all", ((0, 10080),)),)),
        service_times=catalog,
        eds=(EDFacility("E1", ("g1",), 0.0, CONST(45.0)),),
        severity_transition=SeverityTransition.identity(),
        outcome_model=outcome_rows(),
        sanitize_probability=0.0,
        scenario=FleetScenario("one-unit", (("B1", 1, 0),), 30.0),
        horizon_minutes=14400.0,
        warmup_minutes=0.0,
        replications=2,
        base_seed=7,
        **{k: v for k, v in overrides.items() if k in (
            "h12_window", "location_rule", "slot_boundary_policy")},
    )
    replace_keys = {k: v for k, v in overrides.items() if k not in (
        "h12_window", "location_rule", "slot_boundary_policy")}
    if replace_keys:
        instance = dataclasses.replace(instance, **replace_keys)
    instance.validate()
    return instance


@pytest.fixture(scope="session")
def rieti():
    """The rieti-like synthetic instance plus its alternative fleet scenarios."""
    return build_rieti_like(42)


@pytest.fixture(scope="session")
def rieti_instance(rieti):
    return rieti[0]


@pytest.fixture(scope="session")
def rieti_dir(tmp_path_factory):
    """A generated rieti-like instance directory (seed 42)."""
    from emsim.synth import generate

    out = tmp_path_factory.mktemp("rieti_like")
    generate("rieti-like", 42, out)
    return out
