"""Discrete-event simulator for regional ambulance emergency systems."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationObservation,
    CalibrationTable,
    TravelLeg,
    TravelTimeModel,
    build_table,
    estimate_alpha,
    filter_observations,
)
from .config_load import load_instance, save_instance
from .demand import (
    CallSquare,
    DemandModel,
    DemandTimeSlotScheme,
    EmergencyCall,
    GenerationZone,
    build_demand_grid,
    next_arrival,
    pick_square,
    spawn_call,
)
from .engine import MissionRecord, ReplicationResult, ScriptedCall, Simulator, run_replication
from .kpi import (
    CoverageResult,
    PairedComparison,
    ReplicationSummary,
    SummaryStat,
    coverage,
    paired_t,
    scenario_scorecard,
    student_t_ppf,
    summarize,
    validate_against_history,
)
from .model import (
    AmbulanceSpec,
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
    UrgencyClass,
    urgency_of,
    validate_week_partition,
)
from .randomness import (
    DistributionRef,
    RngStream,
    fit_or_empirical,
    ks_statistic,
    sample,
    sample_triangular_travel,
)
from .replication import RunResult, run_many
from .synth import build_rieti_like

__all__ = [name for name in dir() if not name.startswith("_")]
