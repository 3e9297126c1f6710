"""Discrete-event kernel: event calendar, ambulance states, and the mission lifecycle.

One replication is one strictly single-threaded event loop over a calendar
ordered by (time, scheduling sequence).  The mission path is: call arrival,
telephone triage, dispatch decision (threshold queueing), travel to scene,
on-scene resolution (cancel en route / treat on site / transport), ED
selection, offload with possible ambulance block, then sanitization at base,
direct redispatch to a nearby queued call, or return to base.  Preemption,
on-idle reassignment and dispatching during the return leg are not modelled.

All stochastic draws happen at fixed lifecycle points on named streams, so a
given (instance, base_seed, replication_index) reproduces the record list and
the event log bit for bit.
"""

from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass
from heapq import heappop, heappush

from .calibration import TravelLeg, TravelTimeModel
from .demand import CallStatus, EmergencyCall, next_arrival, spawn_call
from .model import (
    MINUTES_PER_DAY,
    OUTCOME_CANCEL,
    OUTCOME_ONSITE,
    OUTCOME_ORDER,
    Phase,
    PointKind,
    SeverityTag,
    SimulationInstance,
    TAG_ORDER,
    TAG_RANK,
    UrgencyClass,
    urgency_of,
)
from .randomness import RngStream, sample

__all__ = [
    "Simulator",
    "ReplicationResult",
    "MissionRecord",
    "ScriptedCall",
    "StreamBundle",
    "AmbState",
    "run_replication",
    "EVENT_KINDS",
]

# Event kinds, in the vocabulary of the canonical event log.
CALL_ARRIVAL = "CallArrival"
TRIAGE_DONE = "TriageDone"
DISPATCH_DECISION = "DispatchDecision"
ARRIVE_SCENE = "ArriveScene"
SCENE_DONE = "SceneDone"
ARRIVE_ED = "ArriveED"
OFFLOAD_DONE = "OffloadDone"
ARRIVE_BASE = "ArriveBase"
SANITIZATION_DONE = "SanitizationDone"
SHIFT_START = "ShiftStart"
SHIFT_END = "ShiftEnd"

EVENT_KINDS = (CALL_ARRIVAL, TRIAGE_DONE, DISPATCH_DECISION, ARRIVE_SCENE,
               SCENE_DONE, ARRIVE_ED, OFFLOAD_DONE, ARRIVE_BASE,
               SANITIZATION_DONE, SHIFT_START, SHIFT_END)

QUEUE_SCAN = -1  # call id marker for a queue-rescan DispatchDecision


class AmbState:
    IDLE_AT_BASE = "IdleAtBase"
    DISPATCHED = "Dispatched"
    ON_SCENE = "OnScene"
    TO_ED = "ToED"
    AT_ED = "AtED"
    RETURNING = "Returning"
    SANITIZING = "Sanitizing"
    OFF_SHIFT = "OffShift"


@dataclass(slots=True)
class AmbulanceUnit:
    """Mutable runtime state of one vehicle."""

    index: int
    id: str
    home_base: str
    schedule: str
    on_minute: int
    off_minute: int
    state: str
    position: str          # current network point id
    call_id: int | None = None
    sanitize_pending: bool = False
    mission_urgency: UrgencyClass = UrgencyClass.URGENT

    def on_shift(self, now: float) -> bool:
        if self.schedule == "H24":
            return True
        minute_of_day = now % MINUTES_PER_DAY
        return self.on_minute <= minute_of_day < self.off_minute


@dataclass(frozen=True)
class ScriptedCall:
    """Deterministic call injection (trace tests, historical replay).

    When a script is supplied the zone arrival generators are not started.
    Fields left as None are drawn from the zone's distributions as usual.
    """

    arrival_minute: float
    zone: str
    square: str | None = None
    triage_tag: SeverityTag | None = None
    pathology_group: str | None = None


@dataclass(frozen=True)
class MissionRecord:
    """Immutable snapshot of one call after the replication, the KPI source."""

    replication: int
    call_id: int
    zone: str
    square: str
    arrival_minute: float
    location_x: float
    location_y: float
    triage_tag: str
    onscene_tag: str | None
    pathology_group: str
    status: str
    censored: bool
    in_warmup: bool
    ambulance_id: str | None
    home_base: str | None
    dispatch_origin: str | None
    ed_id: str | None
    response_time_minutes: float | None
    t_triage_done: float | None
    t_assigned: float | None
    t_depart_base: float | None
    t_arrive_scene: float | None
    t_depart_scene: float | None
    t_arrive_ed: float | None
    t_offload_start: float | None
    t_offload_done: float | None
    t_mission_end: float | None


@dataclass
class ReplicationResult:
    replication_index: int
    records: list
    event_lines: list | None
    n_events: int
    violations: list


class StreamBundle:
    """One stream per purpose; arrival streams are split per zone."""

    def __init__(self, base_seed: int, replication_index: int, zone_ids):
        self.locations = RngStream(base_seed, replication_index, "locations")
        self.attributes = RngStream(base_seed, replication_index, "attributes")
        self.service = RngStream(base_seed, replication_index, "service")
        self.travel = RngStream(base_seed, replication_index, "travel")
        self.outcomes = RngStream(base_seed, replication_index, "outcomes")
        self.arrivals = {z: RngStream(base_seed, replication_index, f"arrivals/{z}")
                         for z in zone_ids}


def _draw_row(probs, u: float) -> int:
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


class Simulator:
    """One replication of the mission workflow over [0, horizon_minutes)."""

    def __init__(self, instance: SimulationInstance, replication_index: int,
                 record_events: bool = False, invariant_checks: bool = False,
                 scripted_calls=None):
        self.instance = instance
        self.replication_index = replication_index
        self.record_events = record_events
        self.invariant_checks = invariant_checks
        self.scripted_calls = list(scripted_calls) if scripted_calls is not None else None

        self.horizon = instance.horizon_minutes
        self.warmup = instance.warmup_minutes
        self.now = 0.0
        self.seq = 0
        self.heap: list = []
        self.calls: dict[int, EmergencyCall] = {}
        self.next_call_id = 1
        # queued calls as sorted (priority key, call_id) pairs
        self.queue: list[tuple[tuple, int]] = []
        self.event_lines: list[str] | None = [] if record_events else None
        self.n_events = 0
        self.violations: list[str] = []
        self._last_key = (-1.0, -1)
        self._scripts: dict[int, list] = {}

        self.zones = instance.demand.zones
        self.zone_index = {z.id: i for i, z in enumerate(self.zones)}
        self.streams = StreamBundle(instance.base_seed, replication_index,
                                    [z.id for z in self.zones])
        self.travel_model: TravelTimeModel = instance.travel
        self.catalog = instance.service_times
        self.scheme = instance.demand.scheme
        self.slot_of = instance.calibration_slots.slot_of
        self.sq_point = {sid: sq.representative_point
                         for sid, sq in instance.demand.squares.items()}
        self.eds = {ed.point: ed for ed in instance.eds}
        self._ed_candidates = {}
        for group in sorted({g for ed in instance.eds for g in ed.referral_groups}):
            self._ed_candidates[group] = tuple(
                ed for ed in instance.eds if group in ed.referral_groups)

        self.units: list[AmbulanceUnit] = []
        for i, spec in enumerate(instance.units()):
            state = AmbState.IDLE_AT_BASE if spec.on_shift(0.0) else AmbState.OFF_SHIFT
            self.units.append(AmbulanceUnit(
                index=i, id=spec.id, home_base=spec.home_base, schedule=spec.schedule,
                on_minute=spec.on_minute, off_minute=spec.off_minute,
                state=state, position=spec.home_base))

    # ------------------------------------------------------------------
    # calendar

    def _schedule(self, time: float, kind: str, call_id: int = QUEUE_SCAN,
                  unit_index: int = -1) -> None:
        self.seq += 1
        heappush(self.heap, (time, self.seq, kind, call_id, unit_index))

    def _log(self, time: float, seq: int, kind: str, call_id: int, unit_index: int) -> None:
        call_part = "" if call_id < 0 else str(call_id)
        amb_part = "" if unit_index < 0 else self.units[unit_index].id
        self.event_lines.append(f"{time:.6f},{seq},{kind},{call_part},{amb_part}")

    # ------------------------------------------------------------------
    # setup

    def _schedule_initial(self) -> None:
        if self.scripted_calls is not None:
            for script in sorted(self.scripted_calls, key=lambda s: s.arrival_minute):
                zi = self.zone_index[script.zone]
                self._scripts.setdefault(zi, []).append(script)
            # one arrival event per scripted call, in script order per zone
            for zi, scripts in self._scripts.items():
                for script in scripts:
                    if script.arrival_minute < self.horizon:
                        self._schedule(script.arrival_minute, CALL_ARRIVAL, call_id=-2 - zi)
        else:
            for zi, zone in enumerate(self.zones):
                t0 = next_arrival(zone, 0.0, self.scheme, self.streams.arrivals[zone.id],
                                  self.instance.slot_boundary_policy)
                if t0 < self.horizon:
                    self._schedule(t0, CALL_ARRIVAL, call_id=-2 - zi)
        for unit in self.units:
            if unit.schedule != "H12":
                continue
            n_days = math.ceil(self.horizon / MINUTES_PER_DAY)
            for day in range(n_days):
                on = day * MINUTES_PER_DAY + unit.on_minute
                off = day * MINUTES_PER_DAY + unit.off_minute
                if on < self.horizon:
                    self._schedule(on, SHIFT_START, unit_index=unit.index)
                if off < self.horizon:
                    self._schedule(off, SHIFT_END, unit_index=unit.index)

    # ------------------------------------------------------------------
    # main loop

    def run(self) -> ReplicationResult:
        self._schedule_initial()
        heap = self.heap
        checks = self.invariant_checks
        while heap:
            time, seq, kind, call_id, unit_index = heappop(heap)
            if time >= self.horizon:
                break  # calendar is ordered; everything left is discarded
            if checks and (time, seq) < self._last_key:
                self.violations.append(f"calendar order broken at {time},{seq}")
            self._last_key = (time, seq)
            self.now = time
            self.n_events += 1

            if kind == CALL_ARRIVAL:
                call_id = self._on_call_arrival(-2 - call_id)
            elif kind == TRIAGE_DONE:
                self._on_triage_done(call_id)
            elif kind == DISPATCH_DECISION:
                self._on_dispatch_decision(call_id)
            elif kind == ARRIVE_SCENE:
                self._on_arrive_scene(call_id, unit_index)
            elif kind == SCENE_DONE:
                self._on_scene_done(call_id, unit_index)
            elif kind == ARRIVE_ED:
                self._on_arrive_ed(call_id, unit_index)
            elif kind == OFFLOAD_DONE:
                self._on_offload_done(call_id, unit_index)
            elif kind == ARRIVE_BASE:
                self._on_arrive_base(unit_index)
            elif kind == SANITIZATION_DONE:
                self._on_unit_freed(unit_index)
            elif kind == SHIFT_START:
                self._on_shift_start(unit_index)
            elif kind == SHIFT_END:
                self._on_shift_end(unit_index)

            if self.event_lines is not None:
                self._log(time, seq, kind, call_id, unit_index)

        records = self._finalize_records()
        return ReplicationResult(self.replication_index, records,
                                 self.event_lines, self.n_events, self.violations)

    # ------------------------------------------------------------------
    # arrivals and triage

    def _on_call_arrival(self, zone_idx: int) -> int:
        zone = self.zones[zone_idx]
        call_id = self.next_call_id
        self.next_call_id += 1
        if self.scripted_calls is not None:
            script = self._scripts[zone_idx].pop(0)
            call = spawn_call(self.instance.demand, self.instance.network, zone,
                              self.now, call_id, self.streams.locations,
                              self.streams.attributes, self.instance.location_rule)
            if script.square is not None:
                rep = self.instance.network.require(self.sq_point[script.square])
                call.square = script.square
                call.location_x, call.location_y = rep.x, rep.y
            if script.triage_tag is not None:
                call.triage_tag = script.triage_tag
            if script.pathology_group is not None:
                call.pathology_group = script.pathology_group
        else:
            call = spawn_call(self.instance.demand, self.instance.network, zone,
                              self.now, call_id, self.streams.locations,
                              self.streams.attributes, self.instance.location_rule)
            nxt = next_arrival(zone, self.now, self.scheme,
                               self.streams.arrivals[zone.id],
                               self.instance.slot_boundary_policy)
            if nxt < self.horizon:
                self._schedule(nxt, CALL_ARRIVAL, call_id=-2 - zone_idx)
        self.calls[call_id] = call
        triage = sample(self.catalog.get(Phase.TELEPHONE_TRIAGE, call.urgency()),
                        self.streams.service)
        self._schedule(self.now + triage, TRIAGE_DONE, call_id=call_id)
        return call_id

    def _on_triage_done(self, call_id: int) -> None:
        call = self.calls[call_id]
        call.t_triage_done = self.now
        self._schedule(self.now, DISPATCH_DECISION, call_id=call_id)

    # ------------------------------------------------------------------
    # dispatching

    def _queue_key(self, call: EmergencyCall) -> tuple:
        urgent_rank = 0 if call.urgency() == UrgencyClass.URGENT else 1
        return (urgent_rank, TAG_RANK[call.triage_tag], call.arrival_minute, call.call_id)

    def _decision_travel_minutes(self, unit: AmbulanceUnit, call: EmergencyCall) -> float:
        """Deterministic calibrated travel time used for dispatch decisions."""
        leg = self._leg_from(unit.position)
        return self.travel_model.travel_time(
            unit.position, self.sq_point[call.square], leg,
            self.slot_of(self.now), call.urgency(), stream=None)

    def _leg_from(self, position: str) -> TravelLeg:
        kind = self.travel_model.point_kinds[position]
        if kind == PointKind.BASE:
            return TravelLeg.BASE_TO_SCENE
        if kind == PointKind.DEMAND_SQUARE:
            return TravelLeg.SCENE_TO_SCENE
        return TravelLeg.ED_TO_SCENE

    def _candidates(self) -> list:
        now = self.now
        return [u for u in self.units
                if u.state == AmbState.IDLE_AT_BASE and u.on_shift(now)]

    def _best_unit(self, call: EmergencyCall, units) -> tuple[float, AmbulanceUnit] | None:
        best = None
        for unit in units:
            minutes = self._decision_travel_minutes(unit, call)
            if best is None or (minutes, unit.id) < (best[0], best[1].id):
                best = (minutes, unit)
        return best

    def _on_dispatch_decision(self, call_id: int) -> None:
        if call_id >= 0:
            call = self.calls[call_id]
            best = self._best_unit(call, self._candidates())
            threshold = self.instance.scenario.threshold_for(call.urgency())
            if best is not None and best[0] <= threshold:
                self._begin_mission(call, best[1], origin="base")
            else:
                insort(self.queue, (self._queue_key(call), call_id))
        else:
            self._scan_queue()

    def _scan_queue(self) -> None:
        """Dispatch queued calls in priority order while any is reachable in time."""
        made_dispatch = True
        while made_dispatch and self.queue:
            made_dispatch = False
            units = self._candidates()
            if not units:
                return
            for pos, (_, call_id) in enumerate(self.queue):
                call = self.calls[call_id]
                best = self._best_unit(call, units)
                threshold = self.instance.scenario.threshold_for(call.urgency())
                if best is not None and best[0] <= threshold:
                    if self.invariant_checks:
                        self._check_queue_discipline(pos, units)
                    del self.queue[pos]
                    self._begin_mission(call, best[1], origin="base")
                    made_dispatch = True
                    break

    def _check_queue_discipline(self, pos: int, units) -> None:
        """No strictly higher-priority queued call may be reachable within threshold."""
        for _, earlier_id in self.queue[:pos]:
            earlier = self.calls[earlier_id]
            best = self._best_unit(earlier, units)
            threshold = self.instance.scenario.threshold_for(earlier.urgency())
            if best is not None and best[0] <= threshold:
                self.violations.append(
                    f"queue discipline broken: call {earlier_id} skipped while reachable")

    def _begin_mission(self, call: EmergencyCall, unit: AmbulanceUnit, origin: str) -> None:
        now = self.now
        if self.invariant_checks:
            if unit.call_id is not None:
                self.violations.append(
                    f"preemption: unit {unit.id} reassigned from call {unit.call_id}")
            if unit.state in (AmbState.RETURNING, AmbState.SANITIZING):
                self.violations.append(
                    f"on-road redispatch: unit {unit.id} dispatched while {unit.state}")
            if not unit.on_shift(now):
                self.violations.append(f"unit {unit.id} dispatched while off shift")

        urg = call.urgency()
        assign = sample(self.catalog.get(Phase.AMBULANCE_ASSIGNMENT, urg), self.streams.service)
        prep = sample(self.catalog.get(Phase.AMBULANCE_PREPARATION, urg), self.streams.service)
        call.t_assigned = now + assign
        depart = now + assign + prep
        call.t_depart_base = depart

        leg = self._leg_from(unit.position)
        travel = self.travel_model.travel_time(
            unit.position, self.sq_point[call.square], leg,
            self.slot_of(depart), urg, stream=self.streams.travel)

        # on-scene resolution is drawn at dispatch so the draw order is
        # seed-stable; a cancellation fires at the scheduled arrival instant
        row = self.instance.severity_transition.row(call.triage_tag)
        onscene = TAG_ORDER[_draw_row(row, self.streams.outcomes.random())]
        outcome = OUTCOME_ORDER[_draw_row(self.instance.outcome_model.row(onscene),
                                          self.streams.outcomes.random())]
        call.onscene_tag = None if outcome == OUTCOME_CANCEL else onscene
        call.outcome = outcome

        call.status = CallStatus.ASSIGNED
        call.ambulance_id = unit.id
        call.home_base = unit.home_base
        call.dispatch_origin = origin
        unit.state = AmbState.DISPATCHED
        unit.call_id = call.call_id
        unit.mission_urgency = urg if outcome == OUTCOME_CANCEL else urgency_of(onscene)
        self._schedule(depart + travel, ARRIVE_SCENE, call_id=call.call_id,
                       unit_index=unit.index)

    # ------------------------------------------------------------------
    # scene, transport, offload

    def _on_arrive_scene(self, call_id: int, unit_index: int) -> None:
        call = self.calls[call_id]
        unit = self.units[unit_index]
        unit.position = self.sq_point[call.square]
        if call.outcome == OUTCOME_CANCEL:
            call.status = CallStatus.CANCELLED_EN_ROUTE
            call.t_mission_end = self.now
            self._post_mission(unit)
            return
        call.t_arrive_scene = self.now
        call.status = CallStatus.SERVED
        unit.state = AmbState.ON_SCENE
        urg = urgency_of(call.onscene_tag)
        phase = Phase.TREATMENT_ON_SITE if call.outcome == OUTCOME_ONSITE else Phase.PATIENT_LOAD
        duration = sample(self.catalog.get(phase, urg), self.streams.service)
        self._schedule(self.now + duration, SCENE_DONE, call_id=call_id,
                       unit_index=unit_index)

    def _select_ed(self, call: EmergencyCall):
        """Nearest ED (calibrated scene-to-ED time) within the call's referral group."""
        candidates = self._ed_candidates[call.pathology_group]
        slot = self.slot_of(self.now)
        urg = urgency_of(call.onscene_tag)
        origin = self.sq_point[call.square]
        best = None
        for ed in candidates:
            minutes = self.travel_model.travel_time(
                origin, ed.point, TravelLeg.SCENE_TO_ED, slot, urg, stream=None)
            if best is None or (minutes, ed.point) < (best[0], best[1].point):
                best = (minutes, ed)
        return best[1]

    def _on_scene_done(self, call_id: int, unit_index: int) -> None:
        call = self.calls[call_id]
        unit = self.units[unit_index]
        call.t_depart_scene = self.now
        if call.outcome == OUTCOME_ONSITE:
            call.status = CallStatus.CLOSED_ON_SITE
            call.t_mission_end = self.now
            self._post_mission(unit)
            return
        ed = self._select_ed(call)
        call.ed_id = ed.point
        unit.state = AmbState.TO_ED
        travel = self.travel_model.travel_time(
            self.sq_point[call.square], ed.point, TravelLeg.SCENE_TO_ED,
            self.slot_of(self.now), urgency_of(call.onscene_tag),
            stream=self.streams.travel)
        self._schedule(self.now + travel, ARRIVE_ED, call_id=call_id,
                       unit_index=unit_index)

    def _on_arrive_ed(self, call_id: int, unit_index: int) -> None:
        call = self.calls[call_id]
        unit = self.units[unit_index]
        unit.position = call.ed_id
        unit.state = AmbState.AT_ED
        call.t_arrive_ed = self.now
        call.t_offload_start = self.now
        ed = self.eds[call.ed_id]
        blocked = self.streams.outcomes.random() < ed.aod_probability
        delay = sample(ed.aod_delay, self.streams.service) if blocked else 0.0
        discharge = sample(self.catalog.get(Phase.PATIENT_DISCHARGE, unit.mission_urgency),
                           self.streams.service)
        self._schedule(self.now + delay + discharge, OFFLOAD_DONE, call_id=call_id,
                       unit_index=unit_index)

    def _on_offload_done(self, call_id: int, unit_index: int) -> None:
        call = self.calls[call_id]
        unit = self.units[unit_index]
        call.t_offload_done = self.now
        call.t_mission_end = self.now
        call.status = CallStatus.TRANSPORTED
        self._post_mission(unit)

    # ------------------------------------------------------------------
    # end of mission: sanitize, direct redispatch, or return

    def _post_mission(self, unit: AmbulanceUnit) -> None:
        now = self.now
        unit.call_id = None
        sanitize = self.streams.outcomes.random() < self.instance.sanitize_probability
        if not sanitize and unit.on_shift(now):
            # Figure-1 "call nearby?": first queued call reachable from here
            for pos, (_, call_id) in enumerate(self.queue):
                call = self.calls[call_id]
                minutes = self._decision_travel_minutes(unit, call)
                if minutes <= self.instance.scenario.threshold_for(call.urgency()):
                    del self.queue[pos]
                    self._begin_mission(call, unit, origin="field")
                    return
        unit.sanitize_pending = sanitize
        unit.state = AmbState.RETURNING
        travel = self.travel_model.travel_time(
            unit.position, unit.home_base, TravelLeg.RETURN_TO_BASE,
            self.slot_of(now), UrgencyClass.NON_URGENT, stream=self.streams.travel)
        self._schedule(now + travel, ARRIVE_BASE, unit_index=unit.index)

    def _on_arrive_base(self, unit_index: int) -> None:
        unit = self.units[unit_index]
        unit.position = unit.home_base
        if unit.sanitize_pending:
            unit.sanitize_pending = False
            unit.state = AmbState.SANITIZING
            duration = sample(self.catalog.get(Phase.SANITIZATION, unit.mission_urgency),
                              self.streams.service)
            self._schedule(self.now + duration, SANITIZATION_DONE, unit_index=unit_index)
        else:
            self._on_unit_freed(unit_index)

    def _on_unit_freed(self, unit_index: int) -> None:
        unit = self.units[unit_index]
        if unit.on_shift(self.now):
            unit.state = AmbState.IDLE_AT_BASE
            if self.queue:
                self._schedule(self.now, DISPATCH_DECISION)
        else:
            unit.state = AmbState.OFF_SHIFT

    def _on_shift_start(self, unit_index: int) -> None:
        unit = self.units[unit_index]
        if unit.state == AmbState.OFF_SHIFT:
            unit.state = AmbState.IDLE_AT_BASE
            if self.queue:
                self._schedule(self.now, DISPATCH_DECISION)

    def _on_shift_end(self, unit_index: int) -> None:
        unit = self.units[unit_index]
        # a unit mid-mission completes the whole mission first; the window is
        # re-checked when it frees up
        if unit.state == AmbState.IDLE_AT_BASE:
            unit.state = AmbState.OFF_SHIFT

    # ------------------------------------------------------------------
    # results

    _TS_FIELDS = ("t_triage_done", "t_assigned", "t_depart_base", "t_arrive_scene",
                  "t_depart_scene", "t_arrive_ed", "t_offload_start",
                  "t_offload_done", "t_mission_end")

    def _finalize_records(self) -> list:
        records = []
        n_terminal = 0
        for call_id in sorted(self.calls):
            call = self.calls[call_id]
            censored = call.status not in CallStatus.TERMINAL
            if not censored:
                n_terminal += 1
            status = call.status
            if censored and status == CallStatus.ASSIGNED and call.t_depart_base is not None \
                    and call.t_depart_base <= self.horizon:
                status = CallStatus.EN_ROUTE
            response = None
            if call.status in (CallStatus.CLOSED_ON_SITE, CallStatus.TRANSPORTED):
                response = call.t_arrive_scene - call.arrival_minute
            if self.invariant_checks:
                self._check_timestamps(call)
            records.append(MissionRecord(
                replication=self.replication_index,
                call_id=call.call_id,
                zone=call.zone,
                square=call.square,
                arrival_minute=call.arrival_minute,
                location_x=call.location_x,
                location_y=call.location_y,
                triage_tag=call.triage_tag.value,
                onscene_tag=call.onscene_tag.value if call.onscene_tag else None,
                pathology_group=call.pathology_group,
                status=status,
                censored=censored,
                in_warmup=call.arrival_minute < self.warmup,
                ambulance_id=call.ambulance_id,
                home_base=call.home_base,
                dispatch_origin=call.dispatch_origin,
                ed_id=call.ed_id,
                response_time_minutes=response,
                t_triage_done=call.t_triage_done,
                t_assigned=call.t_assigned,
                t_depart_base=call.t_depart_base,
                t_arrive_scene=call.t_arrive_scene,
                t_depart_scene=call.t_depart_scene,
                t_arrive_ed=call.t_arrive_ed,
                t_offload_start=call.t_offload_start,
                t_offload_done=call.t_offload_done,
                t_mission_end=call.t_mission_end,
            ))
        if self.invariant_checks:
            n_censored = len(records) - n_terminal
            if n_terminal + n_censored != len(self.calls):
                self.violations.append("call conservation broken")
        return records

    def _check_timestamps(self, call: EmergencyCall) -> None:
        prev = call.arrival_minute
        for name in self._TS_FIELDS:
            value = getattr(call, name)
            if value is None:
                continue
            if value < prev - 1e-9:
                self.violations.append(
                    f"call {call.call_id}: timestamp {name} regressed ({value} < {prev})")
            prev = value


def run_replication(instance: SimulationInstance, replication_index: int,
                    record_events: bool = False, invariant_checks: bool = False,
                    scripted_calls=None) -> ReplicationResult:
    """Run one replication; identical arguments give bit-identical results."""
    sim = Simulator(instance, replication_index, record_events=record_events,
                    invariant_checks=invariant_checks, scripted_calls=scripted_calls)
    return sim.run()
