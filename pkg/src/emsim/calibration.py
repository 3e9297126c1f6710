"""Travel-time calibration: multiplicative scaling factors per leg, slot and urgency.

Routing-service travel times are nominal; a factor alpha(leg, slot, urgency)
estimated from historical observations rescales them to match observed driving
behaviour (traffic, lights-and-sirens mode).  The factor minimizes the L1
discrepancy sum |alpha * t_nominal - t_observed| over the group, which this
module solves exactly as a weighted median of the observed/nominal ratios.
Groups without enough data fall back to the conservative alpha = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .model import PointKind, SchemaViolation, UrgencyClass
from .randomness import RngStream, sample_triangular_travel

__all__ = [
    "TravelLeg",
    "CalibrationObservation",
    "CalibrationTable",
    "TravelTimeModel",
    "EmptyObservations",
    "UnknownPair",
    "filter_observations",
    "estimate_alpha",
    "l1_objective",
    "build_table",
    "read_observations_csv",
    "write_observations_csv",
    "read_table_csv",
    "write_table_csv",
]

DEFAULT_RATIO_BOUNDS = (0.2, 5.0)
DEFAULT_MIN_COUNT = 5


class EmptyObservations(ValueError):
    """Alpha estimation needs at least one observation; callers fall back to 1.0."""


class UnknownPair(LookupError):
    """A travel-time lookup for a pair that is not in the nominal table."""


class TravelLeg(str, Enum):
    BASE_TO_SCENE = "BaseToScene"
    SCENE_TO_ED = "SceneToED"
    SCENE_TO_SCENE = "SceneToScene"
    ED_TO_SCENE = "EDToScene"
    RETURN_TO_BASE = "ReturnToBase"


@dataclass(frozen=True)
class CalibrationObservation:
    """One historical (nominal, observed) travel-time pair for a route class."""

    leg: TravelLeg
    slot: str
    urgency: UrgencyClass
    t_rs: float   # nominal routing-service minutes
    t_obs: float  # observed minutes

    def __post_init__(self) -> None:
        if not (self.t_rs > 0 and self.t_obs > 0):
            raise ValueError("t_rs and t_obs must be positive")

    @property
    def ratio(self) -> float:
        return self.t_obs / self.t_rs

    def group_key(self) -> tuple[TravelLeg, str, UrgencyClass]:
        return (self.leg, self.slot, self.urgency)


def filter_observations(raw, ratio_bounds=DEFAULT_RATIO_BOUNDS):
    """Drop observations whose observed/nominal ratio is implausible.

    Returns ``(kept, removed)`` so callers can report what the consistency
    filter discarded.
    """
    lo, hi = ratio_bounds
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got {ratio_bounds}")
    kept, removed = [], []
    for obs in raw:
        (kept if lo <= obs.ratio <= hi else removed).append(obs)
    return kept, removed


def l1_objective(observations, alpha: float) -> float:
    """The calibration objective: sum of |alpha * t_rs - t_obs| over the group."""
    return math.fsum(abs(alpha * o.t_rs - o.t_obs) for o in observations)


def estimate_alpha(observations) -> float:
    """Exact minimizer of the L1 calibration objective for one group.

    The objective is piecewise linear in alpha with breakpoints at the ratios
    t_obs/t_rs, so the minimizer is the weighted median of the ratios with
    weights t_rs.  Ties (total weight splitting exactly in half) resolve to
    the lower breakpoint, where the objective is flat anyway.
    """
    if not observations:
        raise EmptyObservations("no observations for this group")
    pairs = sorted((o.ratio, o.t_rs) for o in observations)
    total = math.fsum(w for _, w in pairs)
    half = 0.5 * total
    acc = 0.0
    eps = 1e-12 * total
    for ratio, weight in pairs:
        acc += weight
        if acc >= half - eps:
            return ratio
    return pairs[-1][0]  # unreachable for positive weights


@dataclass
class BuildReport:
    """What build_table estimated, defaulted, and filtered out."""

    estimated: list
    defaulted: list
    n_removed: int

    def summary(self) -> str:
        return (f"{len(self.estimated)} groups estimated, "
                f"{len(self.defaulted)} defaulted to 1.0, "
                f"{self.n_removed} observations removed by the consistency filter")


@dataclass(frozen=True)
class CalibrationTable:
    """Map (leg, slot, urgency) -> (alpha, n_obs); missing keys mean alpha = 1."""

    entries: dict

    def __post_init__(self) -> None:
        for key, (alpha, _n) in self.entries.items():
            if not alpha > 0:
                raise ValueError(f"alpha for {key} must be positive")

    @classmethod
    def empty(cls) -> "CalibrationTable":
        return cls({})

    def get(self, leg: TravelLeg, slot: str, urgency: UrgencyClass) -> float:
        entry = self.entries.get((leg, slot, urgency))
        return entry[0] if entry is not None else 1.0

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, CalibrationTable) and self.entries == other.entries


def build_table(all_obs, min_count: int = DEFAULT_MIN_COUNT,
                ratio_bounds=DEFAULT_RATIO_BOUNDS, grid=None):
    """Estimate one alpha per (leg, slot, urgency) group with enough clean data.

    Groups below ``min_count`` observations after filtering get no entry, so
    lookups default to 1.0.  ``grid`` optionally enumerates the full set of
    groups so the coverage report can also list groups with no data at all.
    Returns ``(table, report)``.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    kept, removed = filter_observations(all_obs, ratio_bounds)
    groups: dict = {}
    for obs in kept:
        groups.setdefault(obs.group_key(), []).append(obs)

    entries = {}
    estimated, defaulted = [], []
    for key in sorted(groups, key=lambda k: (k[0].value, k[1], k[2].value)):
        obs = groups[key]
        if len(obs) >= min_count:
            entries[key] = (estimate_alpha(obs), len(obs))
            estimated.append(key)
        else:
            defaulted.append(key)
    if grid is not None:
        for key in grid:
            if key not in groups and key not in defaulted:
                defaulted.append(key)
    return CalibrationTable(entries), BuildReport(estimated, defaulted, len(removed))


@dataclass(frozen=True)
class TravelTimeModel:
    """Nominal travel times plus calibration factors and location-uncertainty noise.

    ``nominal`` maps (origin id, destination id, leg value) to routing-service
    minutes.  Lookups for missing pairs raise :class:`UnknownPair`; there is no
    silent fallback.  ``delta`` gives the per-leg maximum triangular deviation
    applied only when the destination is a demand square (the one case where
    the exact emergency location is uncertain).
    """

    nominal: dict
    calibration: CalibrationTable
    delta: dict
    point_kinds: dict

    def __post_init__(self) -> None:
        for key, minutes in self.nominal.items():
            if not minutes > 0:
                raise ValueError(f"nominal time for {key} must be positive")
        for leg, d in self.delta.items():
            if d < 0:
                raise ValueError(f"delta for {leg} must be nonnegative")

    def nominal_time(self, origin: str, destination: str, leg: TravelLeg) -> float:
        try:
            return self.nominal[(origin, destination, leg.value)]
        except KeyError:
            raise UnknownPair(f"no travel time for ({origin}, {destination}, {leg.value})") from None

    def travel_time(self, origin: str, destination: str, leg: TravelLeg,
                    slot: str, urgency: UrgencyClass,
                    stream: RngStream | None = None) -> float:
        t = self.calibration.get(leg, slot, urgency) * self.nominal_time(origin, destination, leg)
        if stream is not None and self.point_kinds.get(destination) == PointKind.DEMAND_SQUARE:
            d = self.delta.get(leg, 0.0)
            if d > 0.0:
                t = sample_triangular_travel(t, d, stream)
        return t

    def __eq__(self, other) -> bool:
        return (isinstance(other, TravelTimeModel)
                and self.nominal == other.nominal
                and self.calibration == other.calibration
                and self.delta == other.delta
                and self.point_kinds == other.point_kinds)


# ---------------------------------------------------------------------------
# CSV interchange

OBS_HEADER = ["leg", "slot", "urgency", "t_rs", "t_obs"]
TABLE_HEADER = ["leg", "slot", "urgency", "alpha", "n_obs"]


def read_observations_csv(path) -> list[CalibrationObservation]:
    path = Path(path)
    out: list[CalibrationObservation] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != OBS_HEADER:
            raise SchemaViolation(f"{path}: expected header {OBS_HEADER}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(CalibrationObservation(
                    leg=TravelLeg(row["leg"]),
                    slot=row["slot"],
                    urgency=UrgencyClass(row["urgency"]),
                    t_rs=float(row["t_rs"]),
                    t_obs=float(row["t_obs"]),
                ))
            except (KeyError, ValueError) as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    return out


def write_observations_csv(observations, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OBS_HEADER)
        for o in observations:
            writer.writerow([o.leg.value, o.slot, o.urgency.value, repr(o.t_rs), repr(o.t_obs)])


def read_table_csv(path) -> CalibrationTable:
    path = Path(path)
    entries = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TABLE_HEADER:
            raise SchemaViolation(f"{path}: expected header {TABLE_HEADER}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (TravelLeg(row["leg"]), row["slot"], UrgencyClass(row["urgency"]))
                entries[key] = (float(row["alpha"]), int(row["n_obs"]))
            except (KeyError, ValueError) as exc:
                raise SchemaViolation(f"{path}:{lineno}: {exc}") from None
    return CalibrationTable(entries)


def write_table_csv(table: CalibrationTable, path) -> None:
    keys = sorted(table.entries, key=lambda k: (k[0].value, k[1], k[2].value))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for key in keys:
            alpha, n = table.entries[key]
            writer.writerow([key[0].value, key[1], key[2].value, repr(alpha), n])
