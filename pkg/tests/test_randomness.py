"""Stream reproducibility, distribution sampling, KS statistic, and fitting rules."""

import math

import numpy as np
import pytest

from emsim.randomness import (
    DistributionRef,
    EmptySample,
    RngStream,
    SampleTooSmall,
    derive_stream_seed,
    fit_or_empirical,
    ks_critical_value,
    ks_statistic,
    sample,
    sample_triangular_travel,
)


def stream(name="s", seed=123, rep=0):
    return RngStream(seed, rep, name)


class TestStreams:
    def test_identical_identity_reproduces_draws(self):
        a = stream()
        b = stream()
        assert [a.random() for _ in range(10_000)] == [b.random() for _ in range(10_000)]

    def test_distinct_names_are_independent(self):
        # interleaving one stream's draws must not disturb the other
        a1, b1 = stream("a"), stream("b")
        plain_a = [a1.random() for _ in range(100)]
        plain_b = [b1.random() for _ in range(100)]
        a2, b2 = stream("a"), stream("b")
        mixed_a, mixed_b = [], []
        for _ in range(100):
            mixed_b.append(b2.random())
            mixed_a.append(a2.random())
        assert mixed_a == plain_a
        assert mixed_b == plain_b

    def test_seed_derivation_is_stable(self):
        assert derive_stream_seed(1, 2, "x") == derive_stream_seed(1, 2, "x")
        assert derive_stream_seed(1, 2, "x") != derive_stream_seed(1, 3, "x")
        assert derive_stream_seed(1, 2, "x") != derive_stream_seed(1, 2, "y")


class TestDistributions:
    def test_constant(self):
        dist = DistributionRef.constant(7.5)
        s = stream()
        assert all(sample(dist, s) == 7.5 for _ in range(100))

    def test_validation(self):
        with pytest.raises(ValueError):
            DistributionRef.exponential(0.0)
        with pytest.raises(ValueError):
            DistributionRef.triangular(3.0, 2.0, 1.0)
        with pytest.raises(EmptySample):
            DistributionRef.empirical([])
        with pytest.raises(ValueError):
            DistributionRef("empirical", values=(3.0, 1.0))

    def test_truncated_triangular_support_and_zero_mass(self):
        # Triangular(2-5, 2, 2+5) truncated at zero: support [0, 7] and the
        # probability of an exact 0 equals the negative-tail mass
        # F(-3,2,7)(0) = (0-(-3))^2 / ((7-(-3))*(2-(-3))) = 9/50
        dist = DistributionRef.triangular(-3.0, 2.0, 7.0, truncate_at_zero=True)
        s = stream()
        draws = [sample(dist, s) for _ in range(30_000)]
        assert min(draws) >= 0.0 and max(draws) <= 7.0
        zero_freq = sum(1 for d in draws if d == 0.0) / len(draws)
        assert zero_freq == pytest.approx(9 / 50, abs=0.01)

    def test_empirical_resamples_values(self):
        dist = DistributionRef.empirical([3.0, 3.0, 9.0])
        s = stream()
        draws = [sample(dist, s) for _ in range(30_000)]
        assert set(draws) == {3.0, 9.0}
        assert draws.count(3.0) / len(draws) == pytest.approx(2 / 3, abs=0.01)

    def test_empirical_preserves_mean(self):
        values = [1.0, 4.0, 4.0, 10.0, 2.5, 7.0]
        dist = DistributionRef.empirical(values)
        s = stream()
        n = 100_000
        draws = [sample(dist, s) for _ in range(n)]
        mean = sum(values) / len(values)
        std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
        assert abs(sum(draws) / n - mean) <= 4 * std / math.sqrt(n)

    def test_samples_nonnegative_when_truncated(self):
        s = stream()
        dists = [
            DistributionRef.triangular(-10.0, 0.5, 2.0, truncate_at_zero=True),
            DistributionRef("constant", (0.0,), truncate_at_zero=True),
            DistributionRef("empirical", values=(0.0, 1.0, 2.0), truncate_at_zero=True),
        ]
        for dist in dists:
            for _ in range(2_000):
                x = sample(dist, s)
                assert math.isfinite(x) and x >= 0.0


class TestTriangularTravel:
    def test_degenerate_delta_is_exact(self):
        s = stream()
        assert sample_triangular_travel(10.0, 0.0, s) == 10.0

    def test_symmetric_support_and_mean(self):
        s = stream()
        draws = [sample_triangular_travel(10.0, 3.0, s) for _ in range(100_000)]
        assert 7.0 <= min(draws) and max(draws) <= 13.0
        assert sum(draws) / len(draws) == pytest.approx(10.0, abs=0.05)

    def test_clamped_mean_matches_monte_carlo_oracle(self):
        # independent oracle: 10^7 numpy draws of the clamped triangular
        rng = np.random.default_rng(987654321)
        oracle = np.maximum(rng.triangular(-3.0, 2.0, 7.0, size=10_000_000), 0.0).mean()
        s = stream()
        draws = [sample_triangular_travel(2.0, 5.0, s) for _ in range(100_000)]
        assert 0.0 <= min(draws) and max(draws) <= 7.0
        assert sum(draws) / len(draws) == pytest.approx(oracle, abs=0.05)

    def test_rejects_negative_arguments(self):
        with pytest.raises(ValueError):
            sample_triangular_travel(-1.0, 1.0, stream())
        with pytest.raises(ValueError):
            sample_triangular_travel(1.0, -1.0, stream())


def _brute_force_ks(values, cdf) -> float:
    # O(n*m) recount: evaluate both one-sided gaps at every sample point
    n = len(values)
    worst = 0.0
    for x in values:
        below = sum(1 for v in values if v < x) / n
        at_or_below = sum(1 for v in values if v <= x) / n
        worst = max(worst, at_or_below - cdf(x),
                    cdf(math.nextafter(x, -math.inf)) - below)
    return worst


class TestKsStatistic:
    def test_quantile_sample_gives_known_statistic(self):
        # points at the k/(n+1) quantiles of the CDF give D = 1/(n+1)
        n = 9
        cdf = lambda x: min(max(x, 0.0), 1.0)
        values = [k / (n + 1) for k in range(1, n + 1)]
        assert ks_statistic(values, cdf) == pytest.approx(1 / (n + 1), abs=1e-12)

    def test_point_mass(self):
        cdf = lambda x: 1.0 if x >= 0 else 0.0
        assert ks_statistic([0.0], cdf) == 0.0

    def test_empty_sample_rejected(self):
        with pytest.raises(EmptySample):
            ks_statistic([], lambda x: 0.5)

    def test_matches_brute_force_recount(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            values = sorted(rng.exponential(5.0, size=n).tolist())
            if rng.random() < 0.3:  # inject ties
                values += values[: max(1, n // 3)]
            mean = rng.uniform(2.0, 8.0)
            cdf = lambda x, m=mean: 1.0 - math.exp(-x / m) if x > 0 else 0.0
            assert ks_statistic(values, cdf) == pytest.approx(
                _brute_force_ks(values, cdf), abs=1e-12)

    def test_exponential_sample_stays_below_critical_value(self):
        # size property: a correctly-specified exponential passes at 95%
        # in at least 90% of trials
        rng = np.random.default_rng(11)
        n = 100
        crit = 1.36 / math.sqrt(n)
        passes = 0
        for _ in range(1_000):
            values = rng.exponential(10.0, size=n)
            cdf = lambda x: 1.0 - math.exp(-x / 10.0) if x > 0 else 0.0
            if ks_statistic(values.tolist(), cdf) < crit:
                passes += 1
        assert passes >= 900

    def test_critical_value_table(self):
        assert ks_critical_value(0.05, 100) == pytest.approx(0.1358)
        with pytest.raises(ValueError):
            ks_critical_value(0.42, 100)


class TestFitOrEmpirical:
    def test_constant_sample_rejects_exponential(self):
        audit = []
        dist = fit_or_empirical([5.0] * 5, "exponential", audit=audit, label="x,y")
        assert dist.kind == "empirical"
        assert dist.values == (5.0,) * 5
        assert audit == [audit[0]] and audit[0].startswith("x,y,empirical,")

    def test_true_exponential_usually_accepted(self):
        # with the null true, acceptance probability is at least 1 - alpha
        rng = np.random.default_rng(21)
        accepted = 0
        trials = 200
        for _ in range(trials):
            values = rng.exponential(8.0, size=200).tolist()
            if fit_or_empirical(values, "exponential", 0.05).kind == "exponential":
                accepted += 1
        assert accepted / trials >= 0.95

    def test_fitted_mean_is_method_of_moments(self):
        rng = np.random.default_rng(3)
        values = rng.exponential(8.0, size=500).tolist()
        dist = fit_or_empirical(values, "exponential")
        if dist.kind == "exponential":
            assert dist.params[0] == pytest.approx(sum(values) / len(values))

    def test_small_sample_rejected(self):
        with pytest.raises(SampleTooSmall):
            fit_or_empirical([1.0, 2.0, 3.0, 4.0])

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            fit_or_empirical([1.0] * 10, "weibull")
