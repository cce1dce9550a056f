"""Educational selectivity of urban in-migrants.

Migrant status is judged between major regions: anyone who stayed in the
same major region is a stayer, even after a move between its minor
regions. Records without years of schooling leave the means but keep
their place in every count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import GroupTally, Source, accumulate
from .errors import InsufficientDataError
from .flows import ShareSeries, require, require_settlement
from .microdata.codes import FLOW_TYPES, KNOWN_EDUCATION, SECONDARY_PLUS, MigrantStatus, Scale, SettlementFlow
from .microdata.records import RecordFilter
from .stats import LinearFit, PowerFit, power_fit, weighted_ols
from .tables import Table

AGE_FILTERS = {"15+": RecordFilter(min_age=15), "20-24": RecordFilter(min_age=20, max_age=24)}
STATUSES = (
    MigrantStatus.UrbanInMigrant,
    MigrantStatus.RuralInMigrant,
    MigrantStatus.UrbanStayer,
    MigrantStatus.RuralStayer,
)


def _age_filter(ages: str | RecordFilter) -> tuple[str, RecordFilter]:
    if isinstance(ages, RecordFilter):
        return ages.describe(), ages
    try:
        return ages, AGE_FILTERS[ages]
    except KeyError:
        raise ValueError(f"age filter must be one of {sorted(AGE_FILTERS)}") from None


@dataclass(frozen=True)
class MysTable:
    """Mean years of schooling per migrant status; empty cells hold ``None``."""

    means: tuple[float | None, ...]
    weights: tuple[float, ...]
    ages: str = "15+"

    @classmethod
    def from_means(cls, means: Mapping[MigrantStatus | str, float | None], ages: str = "15+") -> "MysTable":
        lookup = {(k.label if isinstance(k, MigrantStatus) else k): v for k, v in means.items()}
        vals = tuple(lookup.get(s.label) for s in STATUSES)
        return cls(vals, tuple(math.nan if v is None else 1.0 for v in vals), ages)

    def mean(self, status: MigrantStatus | str) -> float | None:
        label = status.label if isinstance(status, MigrantStatus) else status
        return self.means[[s.label for s in STATUSES].index(label)]

    def to_table(self) -> Table:
        rows = [[s.label, w, m] for s, w, m in zip(STATUSES, self.weights, self.means)]
        return Table(["status", "weight", "mys"], rows, {"ages": self.ages})


def mys_by_status(
    data: Source,
    ages: str | RecordFilter = "15+",
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> MysTable:
    require(data, "years_schooling", what="years of schooling unavailable")
    require(data, "urban_now", what="urban status of current residence unavailable")
    label, filt = _age_filter(ages)
    tally = accumulate(data, GroupTally(("status",), Scale.major, filt, weighted=weighted), workers)
    w, s = tally.cube("schooling_weight"), tally.cube("schooling_sum")
    means = tuple(float(s[st] / w[st]) if w[st] > 0 else None for st in STATUSES)
    return MysTable(means, tuple(float(w[st]) for st in STATUSES), label)


@dataclass(frozen=True)
class SelectivityRatios:
    ratio_to_urban_stayers: float
    ratio_to_rural_stayers: float
    ages: str = "15+"

    def to_table(self) -> Table:
        return Table(
            ["ages", "ratio_to_urban_stayers", "ratio_to_rural_stayers"],
            [[self.ages, self.ratio_to_urban_stayers, self.ratio_to_rural_stayers]],
        )


def selectivity_ratios(table: MysTable) -> SelectivityRatios:
    """MYS of urban in-migrants over MYS of urban stayers and of rural stayers."""
    mig = table.mean(MigrantStatus.UrbanInMigrant)
    if mig is None:
        raise InsufficientDataError("no urban in-migrants with known schooling")
    out = []
    for status in (MigrantStatus.UrbanStayer, MigrantStatus.RuralStayer):
        ref = table.mean(status)
        if ref is None or not ref > 0:
            raise InsufficientDataError(f"{status.label} mean years of schooling is absent or zero")
        out.append(mig / ref)
    return SelectivityRatios(out[0], out[1], table.ages)


# -- cross-country relation ----------------------------------------------

# Low-schooling outliers set aside in the linear variant of the fit.
LOW_SCHOOLING_OUTLIERS = frozenset({"Guinea", "Mali", "Senegal"})


@dataclass(frozen=True)
class CrossCountryFit:
    power: PowerFit
    linear: LinearFit
    exclusions: frozenset[str]
    countries: tuple[str, ...]
    dropped_missing: tuple[str, ...] = ()

    def to_table(self) -> Table:
        rows = [
            ["power", "coefficient", self.power.coefficient],
            ["power", "exponent", self.power.exponent],
            ["power", "r_squared", self.power.r_squared],
            ["linear", "slope", self.linear.slope],
            ["linear", "intercept", self.linear.intercept],
            ["linear", "r_squared", self.linear.r_squared],
            ["linear", "slope_stderr", self.linear.slope_stderr],
        ]
        meta = {"n_points": len(self.countries), "excluded": ",".join(sorted(self.exclusions)),
                "missing_x": ",".join(self.dropped_missing)}
        return Table(["model", "parameter", "value"], rows, meta)


def cross_country_fit(
    points: Mapping[str, tuple[float | None, float | None]] | Iterable[tuple[str, float | None, float | None]],
    exclusions: Iterable[str] = (),
) -> CrossCountryFit:
    """Power and linear fits of selectivity ratio against national schooling.

    ``points`` maps a country to (national MYS, ratio to rural stayers).
    Countries in ``exclusions`` and countries with a missing coordinate are
    left out; the latter are listed in ``dropped_missing``.
    """
    items = list(points.items()) if isinstance(points, Mapping) else [(c, (x, y)) for c, x, y in points]
    excl = frozenset(exclusions)
    used, missing = [], []
    for country, (x, y) in items:
        if country in excl:
            continue
        if x is None or y is None or (isinstance(x, float) and math.isnan(x)) or (isinstance(y, float) and math.isnan(y)):
            missing.append(country)
            continue
        used.append((country, float(x), float(y)))
    if len(used) < 3:
        raise InsufficientDataError("cross-country fit needs at least three countries")
    xy = [(x, y) for _, x, y in used]
    return CrossCountryFit(power_fit(xy), weighted_ols(xy), excl, tuple(c for c, _, _ in used), tuple(missing))


# -- duration of residence -----------------------------------------------


def _durations(weight_by_duration: np.ndarray, durations: Sequence[int] | None) -> list[int]:
    if durations is not None:
        return list(durations)
    seen = np.nonzero(weight_by_duration[:-1] > 0)[0]
    if len(seen) == 0:
        raise InsufficientDataError("no migrants with a known duration of residence")
    return list(range(int(seen.max()) + 1))


def attainment_by_duration(
    data: Source,
    flow: SettlementFlow | str = SettlementFlow.RU,
    scale: Scale | str = Scale.major,
    durations: Sequence[int] | None = None,
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> ShareSeries:
    """Percentage with at least secondary education among ``flow`` migrants, by duration.

    Durations run from 0 to the longest observed value; when the source
    top-codes duration, the top code is the last entry.
    """
    flow = SettlementFlow.parse(flow) if isinstance(flow, str) else SettlementFlow(flow)
    require(data, "duration_years", what="duration of residence unavailable")
    require_settlement(data)
    tally = accumulate(data, GroupTally(("duration", "flow", "education"), scale, weighted=weighted), workers)
    mig = tally.cube("migrants")[:, int(flow), :]
    known = mig[:, list(KNOWN_EDUCATION)].sum(axis=1)
    plus = mig[:, list(SECONDARY_PLUS)].sum(axis=1)
    keys = _durations(mig.sum(axis=1), durations)
    meta = {"flow": flow.label, "scale": Scale.coerce(scale).value,
            "unknown_duration_migrants": float(mig[-1].sum())}
    return ShareSeries("duration", tuple(str(d) for d in keys), tuple(float(plus[d]) for d in keys),
                       tuple(float(known[d]) for d in keys), meta)


@dataclass(frozen=True)
class DurationMys:
    durations: tuple[int, ...]
    flows: tuple[str, ...]
    weights: np.ndarray
    means: np.ndarray

    def mean(self, duration: int, flow: str) -> float | None:
        v = self.means[self.durations.index(duration), self.flows.index(flow)]
        return None if np.isnan(v) else float(v)

    def to_table(self) -> Table:
        rows = []
        for i, d in enumerate(self.durations):
            for j, f in enumerate(self.flows):
                m = self.means[i, j]
                rows.append([d, f, float(self.weights[i, j]), None if np.isnan(m) else float(m)])
        return Table(["duration", "flow", "weight", "mys"], rows)


def mys_by_duration(
    data: Source,
    scale: Scale | str = Scale.major,
    durations: Sequence[int] | None = None,
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> DurationMys:
    """Mean years of schooling of migrants per (duration, settlement flow) cell."""
    require(data, "duration_years", what="duration of residence unavailable")
    require(data, "years_schooling", what="years of schooling unavailable")
    require_settlement(data)
    tally = accumulate(data, GroupTally(("duration", "flow"), scale, weighted=weighted), workers)
    flows = [int(f) for f in FLOW_TYPES]
    w = tally.cube("schooling_weight")[:, flows]
    s = tally.cube("schooling_sum")[:, flows]
    keys = _durations(tally.cube("migrants")[:, flows].sum(axis=1), durations)
    w, s = w[keys], s[keys]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(w > 0, s / np.where(w > 0, w, 1.0), np.nan)
    return DurationMys(tuple(keys), tuple(f.label for f in FLOW_TYPES), w, means)
