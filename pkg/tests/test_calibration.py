"""Alpha estimation against a dense grid-search oracle, filtering, and lookups."""

import math

import numpy as np
import pytest

from emsim.calibration import (
    CalibrationObservation,
    CalibrationTable,
    EmptyObservations,
    TravelLeg,
    TravelTimeModel,
    UnknownPair,
    build_table,
    estimate_alpha,
    filter_observations,
    l1_objective,
    read_observations_csv,
    read_table_csv,
    write_observations_csv,
    write_table_csv,
)
from emsim.model import PointKind, UrgencyClass
from emsim.randomness import RngStream

U = UrgencyClass.URGENT
N = UrgencyClass.NON_URGENT
BS = TravelLeg.BASE_TO_SCENE
SE = TravelLeg.SCENE_TO_ED


def obs(t_rs, t_obs, leg=BS, slot="peak", urgency=U):
    return CalibrationObservation(leg, slot, urgency, t_rs, t_obs)


def grid_search_alpha(observations, step=1e-5, lo=None, hi=None):
    """Dense grid minimizer of the L1 objective (two-stage refinement)."""
    ratios = [o.ratio for o in observations]
    lo = min(ratios) if lo is None else lo
    hi = max(ratios) if hi is None else hi
    if hi - lo < step:
        lo, hi = lo - step, hi + step
    t_rs = np.array([o.t_rs for o in observations])
    t_obs = np.array([o.t_obs for o in observations])

    def best_on(grid):
        costs = np.abs(np.outer(grid, t_rs) - t_obs).sum(axis=1)
        i = int(np.argmin(costs))
        return float(grid[i]), float(costs[i])

    coarse = max(step, (hi - lo) / 2000.0)
    a0, _ = best_on(np.arange(lo, hi + coarse, coarse))
    fine = np.arange(a0 - coarse, a0 + coarse + step, step)
    return best_on(fine)


class TestFilter:
    def test_extreme_ratio_removed(self):
        kept, removed = filter_observations([obs(10.0, 71.0)], (0.2, 5.0))
        assert kept == [] and len(removed) == 1

    def test_all_inside_identity(self):
        raw = [obs(10.0, 9.0), obs(12.0, 14.0)]
        kept, removed = filter_observations(raw, (0.2, 5.0))
        assert kept == raw and removed == []

    def test_mixed_list_report(self):
        inside = [obs(10.0, 8.0 + i) for i in range(7)]
        outside = [obs(10.0, 60.0), obs(10.0, 1.0), obs(10.0, 90.0)]
        kept, removed = filter_observations(inside + outside, (0.2, 5.0))
        assert len(kept) == 7 and len(removed) == 3

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            filter_observations([], (5.0, 0.2))


class TestEstimateAlpha:
    def test_single_observation(self):
        assert estimate_alpha([obs(10.0, 8.0)]) == pytest.approx(0.8, abs=1e-15)

    def test_common_nominal_median_ratio(self):
        group = [obs(10.0, 8.0), obs(10.0, 9.0), obs(10.0, 14.0)]
        alpha = estimate_alpha(group)
        assert alpha == pytest.approx(0.9, abs=1e-12)
        a_grid, _ = grid_search_alpha(group, step=1e-5, lo=1e-5, hi=3.0)
        assert alpha == pytest.approx(a_grid, abs=1e-4)

    def test_empty_group(self):
        with pytest.raises(EmptyObservations):
            estimate_alpha([])

    def test_heterogeneous_weights_match_grid_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            n = int(rng.integers(1, 30))
            group = [obs(float(rng.uniform(2.0, 60.0)),
                         float(rng.uniform(2.0, 60.0)))
                     for _ in range(n)]
            alpha = estimate_alpha(group)
            a_grid, c_grid = grid_search_alpha(group, step=5e-7)
            assert abs(alpha - a_grid) <= 1e-6
            assert l1_objective(group, alpha) <= c_grid + 1e-9

    def test_scale_equivariance(self):
        rng = np.random.default_rng(9)
        group = [obs(float(rng.uniform(5, 20)), float(rng.uniform(5, 20)))
                 for _ in range(11)]
        base = estimate_alpha(group)
        for c in (0.5, 2.0, 7.3):
            scaled = [obs(o.t_rs, o.t_obs * c) for o in group]
            assert estimate_alpha(scaled) == pytest.approx(c * base, rel=1e-12)

    def test_duplication_invariance(self):
        group = [obs(10.0, 8.0), obs(7.0, 9.0), obs(13.0, 12.0)]
        assert estimate_alpha(group) == estimate_alpha(group + group)

    def test_local_minimum_certificate(self):
        rng = np.random.default_rng(33)
        for _ in range(30):
            group = [obs(float(rng.uniform(2, 40)), float(rng.uniform(2, 40)))
                     for _ in range(int(rng.integers(1, 20)))]
            alpha = estimate_alpha(group)
            here = l1_objective(group, alpha)
            assert here <= l1_objective(group, alpha + 1e-4) + 1e-12
            assert here <= l1_objective(group, alpha - 1e-4) + 1e-12


# the published correction-factor table the synthetic profile reuses
TABLE4 = {
    (BS, N): (0.904, 0.894, 0.887, 0.902, 0.894),
    (SE, N): (0.964, 0.943, 1.064, 0.902, 1.038),
    (BS, U): (0.867, 0.914, 0.920, 0.949, 0.888),
    (SE, U): (0.919, 0.868, 0.959, 0.878, 0.993),
}
SLOTS = ("weekday_peak", "weekday_offpeak", "weekday_night",
         "weekend_offpeak", "weekend_night")


class TestBuildTable:
    def test_no_observations_all_default(self):
        table, report = build_table([])
        assert len(table) == 0
        assert table.get(BS, "peak", U) == 1.0
        assert report.estimated == []

    def test_case_study_shaped_table(self):
        # engineer each group so its median ratio is the published factor
        observations = []
        for (leg, urgency), alphas in TABLE4.items():
            for slot, alpha in zip(SLOTS, alphas):
                for spread in (-0.05, 0.0, 0.02, 0.04, -0.01):
                    observations.append(obs(20.0, 20.0 * (alpha + spread),
                                            leg=leg, slot=slot, urgency=urgency))
        table, report = build_table(observations, min_count=5)
        assert len(table) == 20  # 5 slots x 2 legs x 2 urgency classes
        values = []
        for (leg, urgency), alphas in TABLE4.items():
            for slot, alpha in zip(SLOTS, alphas):
                got = table.get(leg, slot, urgency)
                assert got == pytest.approx(alpha, abs=1e-12)
                values.append(got)
        assert min(values) == pytest.approx(0.867)
        assert max(values) == pytest.approx(1.064)

    def test_group_below_min_count_defaulted(self):
        observations = [obs(10.0, 9.0) for _ in range(4)]
        table, report = build_table(observations, min_count=5)
        assert len(table) == 0
        assert (BS, "peak", U) in report.defaulted

    def test_grid_lists_empty_groups(self):
        grid = [(BS, s, U) for s in SLOTS]
        _, report = build_table([], grid=grid)
        assert set(report.defaulted) == set(grid)


def make_travel_model(alpha=None, delta=None):
    nominal = {("B", "Q", BS.value): 20.0, ("Q", "E", SE.value): 12.0}
    entries = {} if alpha is None else {(BS, "weekday_peak", U): (alpha, 50)}
    return TravelTimeModel(nominal, CalibrationTable(entries), delta or {},
                           {"B": PointKind.BASE, "Q": PointKind.DEMAND_SQUARE,
                            "E": PointKind.EMERGENCY_DEPT})


class TestTravelTime:
    def test_default_table_returns_nominal(self):
        model = make_travel_model()
        assert model.travel_time("Q", "E", SE, "weekday_peak", U) == 12.0

    def test_published_factor_multiplies(self):
        model = make_travel_model(alpha=0.867)
        got = model.travel_time("B", "Q", BS, "weekday_peak", U)
        assert got == pytest.approx(17.34, abs=1e-12)

    def test_noise_only_toward_demand_squares(self):
        model = make_travel_model(alpha=0.867, delta={BS: 4.0, SE: 4.0})
        stream = RngStream(1, 0, "travel")
        draws = [model.travel_time("B", "Q", BS, "weekday_peak", U, stream)
                 for _ in range(5_000)]
        assert all(13.34 <= d <= 21.34 for d in draws)
        assert len(set(draws)) > 1
        # destination is an ED: deterministic even with a stream
        assert model.travel_time("Q", "E", SE, "weekday_peak", U, stream) == 12.0

    def test_unknown_pair(self):
        model = make_travel_model()
        with pytest.raises(UnknownPair):
            model.travel_time("E", "B", TravelLeg.RETURN_TO_BASE, "weekday_peak", U)


class TestCsvRoundTrip:
    def test_table_round_trip(self, tmp_path):
        entries = {(BS, "weekday_peak", U): (0.867, 50),
                   (SE, "weekend_night", N): (1.038, 12)}
        table = CalibrationTable(entries)
        path = tmp_path / "table.csv"
        write_table_csv(table, path)
        assert read_table_csv(path) == table

    def test_observations_round_trip(self, tmp_path):
        observations = [obs(10.0, 8.5), obs(7.25, 9.125, leg=SE, urgency=N)]
        path = tmp_path / "obs.csv"
        write_observations_csv(observations, path)
        assert read_observations_csv(path) == observations
