"""KPIs, replication statistics, historical validation, and paired-t comparison.

Coverage is the share of calls whose response time (call received to ambulance
on scene) stays within a threshold.  The denominator excludes cancelled and
censored calls and everything inside the warm-up window; a call belongs to the
measurement window iff it *arrived* after warm-up.  Calls are classified by the
triage tag by default (the tag in force while the response clock runs); the
revised on-scene tag is available behind ``tag_basis``.

Confidence intervals are Student-t over replications.  The inverse t CDF is
computed here from the regularized incomplete beta function so the paired-t
verdicts do not depend on an external statistics package; tests cross-check it
against tabled values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .demand import CallStatus
from .model import URGENCY_ORDER, UrgencyClass, urgency_of, SeverityTag

__all__ = [
    "DEFAULT_THRESHOLDS",
    "NoCalls",
    "TooFewReplications",
    "LengthMismatch",
    "IncompleteGrid",
    "MissingTarget",
    "CoverageResult",
    "SummaryStat",
    "PairedComparison",
    "ReplicationSummary",
    "VERDICT_IMPROVEMENT",
    "VERDICT_WORSENING",
    "VERDICT_NOT_SIGNIFICANT",
    "student_t_ppf",
    "coverage",
    "summarize",
    "paired_t",
    "verdict_from_ci",
    "scenario_scorecard",
    "validate_against_history",
    "base_assignment_shares",
    "call_counts",
    "summarize_replication",
]

DEFAULT_THRESHOLDS = (10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0)

VERDICT_IMPROVEMENT = "SignificantImprovement"
VERDICT_WORSENING = "SignificantWorsening"
VERDICT_NOT_SIGNIFICANT = "NotSignificant"


class NoCalls(ValueError):
    """The filtered record set for a coverage computation is empty."""


class TooFewReplications(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class IncompleteGrid(ValueError):
    pass


class MissingTarget(KeyError):
    pass


# ---------------------------------------------------------------------------
# Student-t quantiles (regularized incomplete beta + bisection)

def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued-fraction core of the regularized incomplete beta (Lentz scheme)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _student_t_cdf(t: float, df: float) -> float:
    if t == 0.0:
        return 0.5
    ib = _reg_inc_beta(0.5 * df, 0.5, df / (df + t * t))
    return 1.0 - 0.5 * ib if t > 0 else 0.5 * ib


def student_t_ppf(p: float, df: int) -> float:
    """Inverse Student-t CDF, accurate to well below 1e-8 over the tabled range."""
    if not (0.0 < p < 1.0):
        raise ValueError("p must be inside (0, 1)")
    if df < 1:
        raise ValueError("df must be >= 1")
    if p == 0.5:
        return 0.0
    tail = p if p > 0.5 else 1.0 - p
    lo, hi = 0.0, 1.0
    while _student_t_cdf(hi, df) < tail:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - p astronomically close to 1
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _student_t_cdf(mid, df) < tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    value = 0.5 * (lo + hi)
    return value if p > 0.5 else -value


# ---------------------------------------------------------------------------
# record filtering and per-replication KPIs

def _measured(records) -> Iterable:
    """Completed, non-cancelled missions that arrived after the warm-up."""
    for r in records:
        if r.in_warmup or r.censored:
            continue
        if r.status in (CallStatus.CLOSED_ON_SITE, CallStatus.TRANSPORTED):
            yield r


def _record_urgency(record, tag_basis: str) -> UrgencyClass:
    tag = record.triage_tag
    if tag_basis == "onscene" and record.onscene_tag is not None:
        tag = record.onscene_tag
    return urgency_of(SeverityTag(tag))


@dataclass(frozen=True)
class CoverageResult:
    urgency: UrgencyClass
    threshold_minutes: float
    coverage_pct: float
    n_calls: int


def coverage(records, urgency: UrgencyClass, threshold: float,
             tag_basis: str = "triage") -> CoverageResult:
    """Exact percentage of measured calls of ``urgency`` with RT <= threshold."""
    n = 0
    hits = 0
    for r in _measured(records):
        if _record_urgency(r, tag_basis) != urgency:
            continue
        n += 1
        if r.response_time_minutes <= threshold:
            hits += 1
    if n == 0:
        raise NoCalls(f"no measured {urgency.value} calls")
    return CoverageResult(urgency, threshold, 100.0 * hits / n, n)


def base_assignment_shares(records) -> dict:
    """Share of dispatched calls per home base of the serving ambulance.

    Direct redispatches count toward the serving unit's home base even though
    the vehicle never passed through it.  Cancelled missions were assigned, so
    they count too.  Shares sum to 100 whenever any call was dispatched.
    """
    counts: dict[str, int] = {}
    total = 0
    for r in records:
        if r.in_warmup or r.censored or r.home_base is None:
            continue
        if r.status in CallStatus.TERMINAL:
            counts[r.home_base] = counts.get(r.home_base, 0) + 1
            total += 1
    if total == 0:
        return {}
    return {base: 100.0 * n / total for base, n in sorted(counts.items())}


def call_counts(records, tag_basis: str = "triage") -> dict:
    """Measured-window call counts per urgency class (censored calls excluded)."""
    counts = {u: 0 for u in URGENCY_ORDER}
    for r in records:
        if r.in_warmup or r.censored:
            continue
        counts[_record_urgency(r, tag_basis)] += 1
    return counts


# ---------------------------------------------------------------------------
# aggregation across replications

@dataclass(frozen=True)
class SummaryStat:
    """Mean and 95% t confidence interval over replications, plus optional target."""

    avg: float
    lb: float
    ub: float
    n: int
    target: float | None = None

    @property
    def gap_lb(self) -> float:
        return abs(self.lb - self.target)

    @property
    def gap_ub(self) -> float:
        return abs(self.ub - self.target)

    def with_target(self, target: float) -> "SummaryStat":
        return SummaryStat(self.avg, self.lb, self.ub, self.n, target)


def summarize(values, target: float | None = None, confidence: float = 0.95) -> SummaryStat:
    """Sample mean with a two-sided Student-t confidence interval."""
    values = list(values)
    n = len(values)
    if n < 2:
        raise TooFewReplications(f"need at least 2 replications, got {n}")
    avg = math.fsum(values) / n
    var = math.fsum((v - avg) ** 2 for v in values) / (n - 1)
    half = student_t_ppf(0.5 + confidence / 2.0, n - 1) * math.sqrt(var / n)
    return SummaryStat(avg, avg - half, avg + half, n, target)


@dataclass(frozen=True)
class PairedComparison:
    """Paired-t entry for one (urgency, threshold) cell, baseline minus alternative."""

    urgency: UrgencyClass
    threshold_minutes: float
    mean_diff: float
    ci_lo: float
    ci_hi: float
    verdict: str


def verdict_from_ci(ci_lo: float, ci_hi: float) -> str:
    """Negative differences mean the alternative improved on the baseline."""
    if ci_hi < 0.0:
        return VERDICT_IMPROVEMENT
    if ci_lo > 0.0:
        return VERDICT_WORSENING
    return VERDICT_NOT_SIGNIFICANT


def paired_t(baseline, alternative, urgency: UrgencyClass | None = None,
             threshold: float | None = None) -> PairedComparison:
    """95% paired-t interval on per-replication differences (common random numbers).

    Replication i of both runs must have used identical seeds, which the CLI
    enforces through the run manifests.
    """
    baseline = list(baseline)
    alternative = list(alternative)
    if len(baseline) != len(alternative):
        raise LengthMismatch(f"{len(baseline)} vs {len(alternative)} replications")
    diffs = [b - a for b, a in zip(baseline, alternative)]
    stat = summarize(diffs)
    return PairedComparison(urgency, threshold, stat.avg, stat.lb, stat.ub,
                            verdict_from_ci(stat.lb, stat.ub))


def scenario_scorecard(comparisons, thresholds=DEFAULT_THRESHOLDS) -> tuple[int, int]:
    """Tally significant improvements and worsenings over the full KPI grid.

    ``comparisons`` maps (urgency, threshold) to a verdict string and must
    cover all thresholds for both urgency classes.
    """
    expected = {(u, t) for u in URGENCY_ORDER for t in thresholds}
    if set(comparisons) != expected:
        missing = sorted((u.value, t) for (u, t) in expected - set(comparisons))
        raise IncompleteGrid(f"missing comparison cells: {missing}")
    improvements = sum(1 for v in comparisons.values() if v == VERDICT_IMPROVEMENT)
    worsenings = sum(1 for v in comparisons.values() if v == VERDICT_WORSENING)
    return improvements, worsenings


@dataclass(frozen=True)
class ValidationRow:
    kpi: str
    target: float
    avg: float
    lb: float
    ub: float
    gap_lb: float
    gap_ub: float
    passed: bool


def validate_against_history(stats: dict, targets: dict, tolerance_pct: float = 3.0):
    """Compare simulated summary stats against historical values.

    A KPI passes when both CI-bound gaps |LB - target| and |UB - target| stay
    within ``tolerance_pct`` percent of the target's scale.  Returns
    ``(rows, overall_pass)``.
    """
    rows = []
    overall = True
    for kpi in sorted(targets):
        if kpi not in stats:
            raise MissingTarget(kpi)
        stat = stats[kpi].with_target(targets[kpi])
        allowed = abs(stat.target) * tolerance_pct / 100.0
        passed = max(stat.gap_lb, stat.gap_ub) <= allowed
        overall = overall and passed
        rows.append(ValidationRow(kpi, stat.target, stat.avg, stat.lb, stat.ub,
                                  stat.gap_lb, stat.gap_ub, passed))
    return rows, overall


# ---------------------------------------------------------------------------
# per-replication summary vector

@dataclass
class ReplicationSummary:
    """Per-replication KPI vector; the input to CIs and paired-t procedures."""

    replication_index: int
    coverage: dict          # (urgency, threshold) -> (pct, n_calls)
    base_shares: dict       # base id -> pct
    counts: dict            # urgency -> n_calls
    zone_slot_counts: dict  # (zone id, slot index) -> n arrivals
    n_events: int = 0
    violations: tuple = ()


def summarize_replication(records, replication_index: int, scheme,
                          thresholds=DEFAULT_THRESHOLDS,
                          tag_basis: str = "triage",
                          n_events: int = 0, violations=()) -> ReplicationSummary:
    """Reduce one replication's records to its KPI vector.

    Coverage cells with no measured calls are reported as (0.0, 0); callers
    aggregating across replications should keep instances busy enough that
    this never triggers outside toy runs.  Zone-by-slot arrival counts include
    censored calls (they did arrive) but respect the warm-up cut.
    """
    cov = {}
    for urgency in URGENCY_ORDER:
        hits = {t: 0 for t in thresholds}
        n = 0
        for r in _measured(records):
            if _record_urgency(r, tag_basis) != urgency:
                continue
            n += 1
            rt = r.response_time_minutes
            for t in thresholds:
                if rt <= t:
                    hits[t] += 1
        for t in thresholds:
            cov[(urgency, t)] = (100.0 * hits[t] / n if n else 0.0, n)
    zone_slot: dict[tuple[str, int], int] = {}
    for r in records:
        if r.in_warmup:
            continue
        key = (r.zone, scheme.index_of(r.arrival_minute))
        zone_slot[key] = zone_slot.get(key, 0) + 1
    return ReplicationSummary(
        replication_index=replication_index,
        coverage=cov,
        base_shares=base_assignment_shares(records),
        counts=call_counts(records, tag_basis),
        zone_slot_counts=zone_slot,
        n_events=n_events,
        violations=tuple(violations),
    )
