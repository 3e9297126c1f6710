"""Named seeded random streams and the sampleable distributions used by the simulator.

Every random draw in a replication goes through an :class:`RngStream` whose seed
is derived from ``(base_seed, replication_index, stream_name)``.  Streams with
the same identity reproduce the same draw sequence bit for bit, and distinct
stream names give independent sequences.  Keeping one stream per purpose
(arrivals, locations, service phases, travel noise, outcomes) means a scenario
change only perturbs the streams it actually touches, which is what makes
common-random-number pairing across scenarios meaningful.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "DistributionRef",
    "EmptySample",
    "SampleTooSmall",
    "derive_stream_seed",
    "sample",
    "sample_triangular_travel",
    "ks_statistic",
    "ks_critical_value",
    "fit_or_empirical",
]

# Asymptotic one-sample KS critical values: D_crit = c(alpha) / sqrt(n).
KS_CRITICAL_COEFF = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}


class EmptySample(ValueError):
    """A nonempty sample was required."""


class SampleTooSmall(ValueError):
    """Distribution fitting needs at least 5 observations."""


def derive_stream_seed(base_seed: int, replication_index: int, stream_name: str) -> int:
    """Stable 64-bit seed for one named stream.

    SHA-256 based so the mapping is identical across platforms and Python
    processes (the builtin ``hash`` is salted and would not be).
    """
    key = f"{base_seed}:{replication_index}:{stream_name}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


class RngStream:
    """Single-owner random stream backed by a PCG64 generator.

    Never share an instance between concurrently running replications; create
    one bundle of streams per replication instead.
    """

    def __init__(self, base_seed: int, replication_index: int, stream_name: str):
        self.stream_name = stream_name
        self.seed = derive_stream_seed(base_seed, replication_index, stream_name)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self) -> float:
        """Uniform draw in [0, 1)."""
        return float(self._gen.random())

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))

    def triangular(self, low: float, mode: float, high: float) -> float:
        return float(self._gen.triangular(low, mode, high))

    def normal(self, mu: float, sigma: float) -> float:
        return float(self._gen.normal(mu, sigma))

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._gen.integers(n))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream({self.stream_name!r}, seed={self.seed})"


@dataclass(frozen=True)
class DistributionRef:
    """One sampleable duration distribution, in minutes.

    ``kind`` is one of ``constant``, ``exponential``, ``triangular`` or
    ``empirical``.  Empirical distributions resample the observed values with
    replacement (a discrete empirical CDF, no smoothing).  ``Constant(inf)``
    is allowed as the no-arrivals sentinel for zero-rate interarrival slots
    and is the one case where a sampled value is not finite.
    """

    kind: str
    params: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    truncate_at_zero: bool = False

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if len(self.params) != 1 or self.params[0] < 0:
                raise ValueError("constant needs a single value >= 0")
        elif self.kind == "exponential":
            if len(self.params) != 1 or not (self.params[0] > 0) or math.isinf(self.params[0]):
                raise ValueError("exponential needs a finite mean > 0")
        elif self.kind == "triangular":
            if len(self.params) != 3:
                raise ValueError("triangular needs (low, mode, high)")
            low, mode, high = self.params
            if not (low <= mode <= high):
                raise ValueError(f"triangular needs low <= mode <= high, got {self.params}")
        elif self.kind == "empirical":
            if not self.values:
                raise EmptySample("empirical distribution needs a nonempty sample")
            if any(b < a for a, b in zip(self.values, self.values[1:])):
                raise ValueError("empirical sample must be sorted")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "DistributionRef":
        return cls("constant", (float(value),))

    @classmethod
    def exponential(cls, mean: float) -> "DistributionRef":
        return cls("exponential", (float(mean),))

    @classmethod
    def triangular(cls, low: float, mode: float, high: float,
                   truncate_at_zero: bool = True) -> "DistributionRef":
        return cls("triangular", (float(low), float(mode), float(high)),
                   truncate_at_zero=truncate_at_zero)

    @classmethod
    def empirical(cls, values) -> "DistributionRef":
        return cls("empirical", values=tuple(sorted(float(v) for v in values)))

    def mean(self) -> float:
        """Analytic mean (empirical: sample mean)."""
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "exponential":
            return self.params[0]
        if self.kind == "triangular":
            return math.fsum(self.params) / 3.0
        return math.fsum(self.values) / len(self.values)


def sample(dist: DistributionRef, stream: RngStream) -> float:
    """Draw one value from ``dist`` using ``stream``.

    With ``truncate_at_zero`` set, negative draws are clamped to 0, so a value
    of exactly 0 carries the probability mass of the negative tail.
    """
    kind = dist.kind
    if kind == "constant":
        x = dist.params[0]
    elif kind == "exponential":
        x = stream.exponential(dist.params[0])
    elif kind == "triangular":
        low, mode, high = dist.params
        # numpy rejects degenerate support; a zero-width triangle is the mode
        x = mode if high <= low else stream.triangular(low, mode, high)
    else:
        x = dist.values[stream.integers(len(dist.values))]
    if dist.truncate_at_zero and x < 0.0:
        x = 0.0
    return x


def sample_triangular_travel(t: float, delta: float, stream: RngStream) -> float:
    """Travel-time perturbation: Triangular(t - delta, t, t + delta), clamped at 0.

    ``delta`` is the maximum deviation used when the exact emergency location
    inside a grid square is not known.  ``delta == 0`` degenerates to ``t``
    without consuming a draw.
    """
    if t < 0 or delta < 0:
        raise ValueError("travel time and delta must be nonnegative")
    if delta == 0.0:
        return t
    x = stream.triangular(t - delta, t, t + delta)
    return x if x > 0.0 else 0.0


def ks_statistic(sample_values, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic D = sup |F_emp - F|.

    Evaluated at the sample points, taking both one-sided gaps around each
    step of the empirical CDF.  The lower gap uses the CDF's left limit, so a
    point-mass CDF jumping exactly at a sample point is matched, not penalized.
    """
    if len(sample_values) == 0:
        raise EmptySample("KS statistic needs a nonempty sample")
    xs = sorted(sample_values)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs, start=1):
        gap_hi = i / n - cdf(x)
        gap_lo = cdf(math.nextafter(x, -math.inf)) - (i - 1) / n
        if gap_hi > d:
            d = gap_hi
        if gap_lo > d:
            d = gap_lo
    return d


def ks_critical_value(alpha: float, n: int) -> float:
    """Asymptotic critical value c(alpha)/sqrt(n) for the one-sample KS test."""
    try:
        coeff = KS_CRITICAL_COEFF[alpha]
    except KeyError:
        supported = sorted(KS_CRITICAL_COEFF)
        raise ValueError(f"unsupported alpha {alpha}; supported: {supported}") from None
    return coeff / math.sqrt(n)


def fit_or_empirical(sample_values, candidate: str = "exponential",
                     alpha: float = 0.05, audit: list[str] | None = None,
                     label: str = "") -> DistributionRef:
    """Fit ``candidate`` by method of moments, falling back to the empirical CDF.

    The fitted distribution is kept only if the KS statistic stays below the
    critical value at significance ``alpha``; on rejection the empirical
    distribution of the sample is returned instead.  When ``audit`` is given,
    a ``label,decision,D,critical`` line is appended for the fit audit log.
    """
    n = len(sample_values)
    if n < 5:
        raise SampleTooSmall(f"need at least 5 observations, got {n}")
    if candidate != "exponential":
        raise ValueError(f"unsupported candidate family {candidate!r}")
    mean = math.fsum(sample_values) / n
    crit = ks_critical_value(alpha, n)
    if mean > 0:
        def cdf(x: float, _m: float = mean) -> float:
            return 1.0 - math.exp(-x / _m) if x > 0 else 0.0

        d = ks_statistic(sample_values, cdf)
        accept = d <= crit
    else:
        # degenerate sample, exponential cannot fit
        d = 1.0
        accept = False
    decision = "parametric" if accept else "empirical"
    if audit is not None:
        audit.append(f"{label},{decision},{d:.6f},{crit:.6f}")
    if accept:
        return DistributionRef.exponential(mean)
    return DistributionRef.empirical(sample_values)
