"""Domain-type invariants: severity scale, week partition, fleet, instance validation."""

import dataclasses

import pytest

from emsim.model import (
    AmbulanceSpec,
    FleetScenario,
    GeoPoint,
    InvariantViolation,
    CrossRefError,
    NetworkModel,
    OutcomeModel,
    PointKind,
    SeverityTag,
    SeverityTransition,
    SlotScheme,
    TAG_RANK,
    TimeSlot,
    UrgencyClass,
    urgency_of,
    validate_week_partition,
)


class TestSeverity:
    def test_urgency_mapping(self):
        assert urgency_of(SeverityTag.RED) == UrgencyClass.URGENT
        assert urgency_of(SeverityTag.YELLOW) == UrgencyClass.URGENT
        assert urgency_of(SeverityTag.GREEN) == UrgencyClass.NON_URGENT
        assert urgency_of(SeverityTag.WHITE) == UrgencyClass.NON_URGENT

    def test_total_order(self):
        ranks = [TAG_RANK[t] for t in (SeverityTag.RED, SeverityTag.YELLOW,
                                       SeverityTag.GREEN, SeverityTag.WHITE)]
        assert ranks == sorted(ranks) and len(set(ranks)) == 4


def _five_interval_week():
    """Weekday peak/off-peak/night plus weekend off-peak/night."""
    peak, offpeak, night = [], [], []
    we_off, we_night = [], []
    for day in range(5):
        b = day * 1440
        peak += [(b + 420, b + 540), (b + 1020, b + 1140)]
        offpeak += [(b + 360, b + 420), (b + 540, b + 1020), (b + 1140, b + 1380)]
        night += [(b, b + 360), (b + 1380, b + 1440)]
    for day in (5, 6):
        b = day * 1440
        we_off.append((b + 360, b + 1380))
        we_night += [(b, b + 360), (b + 1380, b + 1440)]
    return [
        TimeSlot("weekday_peak", tuple(peak)),
        TimeSlot("weekday_offpeak", tuple(offpeak)),
        TimeSlot("weekday_night", tuple(night)),
        TimeSlot("weekend_offpeak", tuple(we_off)),
        TimeSlot("weekend_night", tuple(we_night)),
    ]


class TestWeekPartition:
    def test_five_interval_scheme_is_a_partition(self):
        assert validate_week_partition(_five_interval_week()) == []

    def test_overlap_reported(self):
        slots = [TimeSlot("a", ((0, 100),)), TimeSlot("b", ((0, 10080),))]
        problems = validate_week_partition(slots)
        assert any("overlap" in p for p in problems)

    def test_gap_reported(self):
        weekdays = TimeSlot("weekdays", tuple((d * 1440, (d + 1) * 1440) for d in range(5)))
        problems = validate_week_partition([weekdays])
        assert problems == ["gap [7200, 10080)"]

    def test_accepts_exactly_full_cover_without_overlap(self):
        # random slot sets: valid iff total length 10080 with zero overlap
        import numpy as np

        rng = np.random.default_rng(8)
        for _ in range(50):
            cuts = sorted(set(rng.integers(1, 10080, size=6).tolist()))
            bounds = [0] + cuts + [10080]
            ranges = list(zip(bounds, bounds[1:]))
            keep = [r for r in ranges if rng.random() > 0.2]
            slots = [TimeSlot(f"s{i}", (r,)) for i, r in enumerate(keep)]
            total = sum(e - s for s, e in keep)
            if total == 10080:
                assert validate_week_partition(slots) == []
            else:
                assert validate_week_partition(slots) != []

    def test_slot_lookup(self):
        scheme = SlotScheme(tuple(_five_interval_week()))
        assert scheme.slot_of(0.0) == "weekday_night"
        assert scheme.slot_of(430.0) == "weekday_peak"
        assert scheme.slot_of(5 * 1440 + 720.0) == "weekend_offpeak"
        # minute-of-week wraps
        assert scheme.slot_of(10080.0 + 430.0) == "weekday_peak"


class TestFleet:
    def test_h12_shift_window(self):
        unit = AmbulanceSpec("U1", "B1", "H12", on_minute=480, off_minute=1200)
        assert not unit.on_shift(0.0)
        assert unit.on_shift(480.0)
        assert unit.on_shift(1199.9)
        assert not unit.on_shift(1200.0)
        assert unit.on_shift(1440.0 + 600.0)

    def test_h24_always_on(self):
        unit = AmbulanceSpec("U1", "B1", "H24")
        assert all(unit.on_shift(m) for m in (0.0, 720.0, 1440.0 * 300 + 90.0))

    def test_build_units_counts_and_order(self):
        scenario = FleetScenario("s", (("B1", 2, 1), ("B2", 1, 0)), 30.0)
        units = scenario.build_units()
        assert [u.home_base for u in units] == ["B1", "B1", "B1", "B2"]
        assert [u.schedule for u in units] == ["H24", "H24", "H12", "H24"]
        assert [u.id for u in units] == sorted(u.id for u in units)

    def test_empty_fleet_rejected(self):
        with pytest.raises(InvariantViolation):
            FleetScenario("s", (("B1", 0, 0),), 30.0)

    def test_threshold_override(self):
        scenario = FleetScenario("s", (("B1", 1, 0),), 30.0,
                                 threshold_overrides=((UrgencyClass.URGENT, 20.0),))
        assert scenario.threshold_for(UrgencyClass.URGENT) == 20.0
        assert scenario.threshold_for(UrgencyClass.NON_URGENT) == 30.0


class TestStochasticMatrices:
    def test_row_sum_violation(self):
        rows = {t: (0.25, 0.25, 0.25, 0.25) for t in SeverityTag}
        rows[SeverityTag.RED] = (0.5, 0.25, 0.11, 0.11)  # sums to 0.97
        with pytest.raises(InvariantViolation):
            SeverityTransition(rows)

    def test_outcome_rows_validated(self):
        rows = {t: (0.1, 0.4, 0.5) for t in SeverityTag}
        OutcomeModel(rows)
        rows[SeverityTag.WHITE] = (0.1, 0.4, 0.4)
        with pytest.raises(InvariantViolation):
            OutcomeModel(rows)

    def test_identity_transition(self):
        ident = SeverityTransition.identity()
        assert ident.row(SeverityTag.GREEN) == (0.0, 0.0, 1.0, 0.0)


class TestNetwork:
    def test_duplicate_ids_rejected(self):
        points = [GeoPoint("P", PointKind.BASE, 0, 0),
                  GeoPoint("P", PointKind.EMERGENCY_DEPT, 1, 1)]
        with pytest.raises(CrossRefError):
            NetworkModel.from_points(points)

    def test_kind_checked_lookup(self):
        net = NetworkModel.from_points([GeoPoint("B", PointKind.BASE, 0, 0)])
        assert net.require("B", PointKind.BASE).id == "B"
        with pytest.raises(CrossRefError):
            net.require("B", PointKind.EMERGENCY_DEPT)
        with pytest.raises(CrossRefError):
            net.require("missing")


class TestInstanceValidation:
    def test_trace_instance_is_valid(self):
        from conftest import make_trace_instance

        make_trace_instance()  # validate() runs inside

    def test_unknown_scenario_base(self):
        from conftest import make_trace_instance
        from emsim.model import FleetScenario

        instance = make_trace_instance()
        bad = dataclasses.replace(
            instance, scenario=FleetScenario("bad", (("NOPE", 1, 0),), 30.0))
        with pytest.raises(CrossRefError):
            bad.validate()

    def test_referral_group_without_ed(self):
        from conftest import make_trace_instance

        instance = make_trace_instance()
        zone = instance.demand.zones[0]
        bad_zone = dataclasses.replace(zone, referral_groups=("ghost",),
                                       referral_probs=(1.0,))
        bad_demand = dataclasses.replace(instance.demand, zones=(bad_zone,))
        bad = dataclasses.replace(instance, demand=bad_demand)
        with pytest.raises(CrossRefError):
            bad.validate()

    def test_missing_travel_pair(self):
        from conftest import make_trace_instance

        instance = make_trace_instance()
        nominal = dict(instance.travel.nominal)
        del nominal[("B1", "Q2", "BaseToScene")]
        bad_travel = dataclasses.replace(instance.travel, nominal=nominal)
        bad = dataclasses.replace(instance, travel=bad_travel)
        with pytest.raises(CrossRefError):
            bad.validate()

    def test_warmup_must_precede_horizon(self):
        from conftest import make_trace_instance

        instance = make_trace_instance()
        bad = dataclasses.replace(instance, warmup_minutes=20000.0)
        with pytest.raises(InvariantViolation):
            bad.validate()

    def test_rieti_shape_counts(self, rieti_instance):
        # case-study shape: 12 bases, 13 EDs, 5 zones, 272 demand points
        assert len(rieti_instance.network.of_kind(PointKind.BASE)) == 12
        assert len(rieti_instance.network.of_kind(PointKind.EMERGENCY_DEPT)) == 13
        assert len(rieti_instance.demand.zones) == 5
        assert len(rieti_instance.demand.squares) == 272
