"""Crude and age-specific migration intensities, education ratios and the
aggregate (all-address) intensity extrapolated from several spatial scales.

The population at risk is the population counted at the census, i.e. at
the end of the migration interval. By default it excludes records whose
previous residence cannot be classified at the requested scale, since they
can be neither migrants nor stayers; ``include_unknown_in_par`` keeps them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import GroupTally, Source, accumulate, bound_fields, hierarchy_of
from .errors import InsufficientDataError
from .microdata.codes import KNOWN_EDUCATION, Education, Reason, Scale
from .microdata.records import AGE_15_PLUS, ALL_RECORDS, RecordFilter
from .tables import Table

MIN_AGE, MAX_AGE = 5, 65


@dataclass(frozen=True)
class Intensity:
    migrants: float
    par: float
    value: float
    scale: Scale
    filter: str = "all records"

    def to_table(self) -> Table:
        return Table(
            ["scale", "filter", "migrants", "par", "value"],
            [[self.scale.value, self.filter, self.migrants, self.par, self.value]],
        )


def _percent(migrants: float, par: float) -> float:
    # Guard against round-off pushing a 100 % intensity a hair above 100.
    return min(100.0, 100.0 * migrants / par)


def cmi(
    data: Source,
    scale: Scale | str = Scale.major,
    filter: RecordFilter = ALL_RECORDS,
    *,
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> Intensity:
    """Crude migration intensity: 100 * migrants / population at risk."""
    scale = Scale.coerce(scale)
    tally = accumulate(data, GroupTally((), scale, filter, include_unknown_in_par, weighted), workers)
    par = float(tally.cube("par"))
    if par <= 0:
        raise InsufficientDataError("population at risk is empty")
    mig = float(tally.cube("migrants"))
    return Intensity(mig, par, _percent(mig, par), scale, filter.describe())


@dataclass(frozen=True)
class IndicatorRow:
    key: tuple[str, ...]
    migrants: float
    par: float
    value: float | None

    @property
    def absent(self) -> bool:
        return self.value is None


@dataclass
class IndicatorTable:
    """Intensities keyed by one or more categorical dimensions.

    Rows whose population at risk is zero are kept with ``value=None``.
    """

    dims: tuple[str, ...]
    rows: list[IndicatorRow]
    scale: Scale
    filter: str = "all records"
    meta: dict = field(default_factory=dict)

    def row(self, *key: str) -> IndicatorRow:
        for r in self.rows:
            if r.key == key:
                return r
        raise KeyError(key)

    def value(self, *key: str) -> float | None:
        return self.row(*key).value

    def to_table(self) -> Table:
        meta = {"scale": self.scale.value, "filter": self.filter, **self.meta}
        return Table(
            list(self.dims) + ["migrants", "par", "value"],
            [list(r.key) + [r.migrants, r.par, r.value] for r in self.rows],
            meta,
        )


TOTAL = "Total"


def cmi_by_education(
    data: Source,
    scale: Scale | str = Scale.major,
    filter: RecordFilter = AGE_15_PLUS,
    *,
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> IndicatorTable:
    """CMI for all records and for each known education level.

    Unknown education counts towards the total only.
    """
    scale = Scale.coerce(scale)
    tally = accumulate(
        data, GroupTally(("education",), scale, filter, include_unknown_in_par, weighted), workers
    )
    par, mig = tally.cube("par"), tally.cube("migrants")
    if par.sum() <= 0:
        raise InsufficientDataError("population at risk is empty")
    rows = [_row((TOTAL,), float(mig.sum()), float(par.sum()))]
    for level in KNOWN_EDUCATION:
        rows.append(_row((level.label,), float(mig[level]), float(par[level])))
    meta = {"unknown_education_par": float(par[Education.Unknown]), "weighted": weighted,
            "include_unknown_in_par": include_unknown_in_par}
    return IndicatorTable(("education",), rows, scale, filter.describe(), meta)


def _row(key, migrants, par) -> IndicatorRow:
    return IndicatorRow(key, migrants, par, _percent(migrants, par) if par > 0 else None)


@dataclass(frozen=True)
class EducationRatios:
    """CMI of each education level relative to the less-than-primary CMI."""

    levels: tuple[str, ...]
    cmi: tuple[float | None, ...]
    ratios: tuple[float | None, ...]

    def ratio(self, level: Education | str) -> float | None:
        label = level.label if isinstance(level, Education) else level
        return self.ratios[self.levels.index(label)]

    def to_table(self) -> Table:
        return Table(["education", "cmi", "ratio"], [list(r) for r in zip(self.levels, self.cmi, self.ratios)])


def education_ratios(table: IndicatorTable | dict) -> EducationRatios:
    """Ratios to the LtPrimary CMI.

    ``table`` is an education :class:`IndicatorTable` or a mapping from
    education label to CMI.
    """
    if isinstance(table, IndicatorTable):
        values = {r.key[0]: r.value for r in table.rows if r.key[0] != TOTAL}
    else:
        values = {(k.label if isinstance(k, Education) else k): v for k, v in table.items()}
    ref = values.get(Education.LtPrimary.label)
    if ref is None:
        raise InsufficientDataError("reference (LtPrimary) CMI is absent")
    if ref <= 0:
        raise InsufficientDataError("reference (LtPrimary) CMI is zero")
    levels = tuple(e.label for e in KNOWN_EDUCATION)
    cmis = tuple(values.get(lv) for lv in levels)
    ratios = tuple(
        1.0 if lv == Education.LtPrimary.label else (None if v is None else v / ref)
        for lv, v in zip(levels, cmis)
    )
    return EducationRatios(levels, cmis, ratios)


def mean_ratios(ratios: Sequence[EducationRatios]) -> tuple[float | None, ...]:
    """Unweighted mean of each level's ratio over the inputs, skipping absent values."""
    if not ratios:
        raise ValueError("no ratio sets given")
    out = []
    for i in range(len(ratios[0].levels)):
        vals = [r.ratios[i] for r in ratios if r.ratios[i] is not None]
        out.append(math.fsum(vals) / len(vals) if vals else None)
    return tuple(out)


# -- aggregate intensity from several scales -----------------------------


@dataclass(frozen=True)
class AcmiEstimate:
    """Courgeau fit CMI = k * ln(n**2) through the origin, extrapolated to ``n_addresses``."""

    courgeau_k: float
    observed: tuple[tuple[float, float], ...]
    n_addresses: float
    acmi_value: float

    def at(self, n_addresses: float) -> float:
        return _acmi(self.courgeau_k, self.observed, n_addresses)

    def to_table(self) -> Table:
        rows = [["observed", n, c] for n, c in self.observed]
        rows.append(["acmi", self.n_addresses, self.acmi_value])
        return Table(["kind", "n_regions", "cmi"], rows, {"courgeau_k": self.courgeau_k})


def acmi_estimate(observed: Sequence[tuple[float, float]], n_addresses: float) -> AcmiEstimate:
    """Least-squares ``k`` in CMI_j = k * ln(n_j**2) over observed (n_j, CMI_j) pairs."""
    obs = tuple((float(n), float(c)) for n, c in observed)
    if not obs:
        raise ValueError("no observed scales")
    for n, c in obs:
        if not n > 1:
            raise ValueError(f"number of regions must exceed 1, got {n}")
        if not c > 0:
            raise ValueError(f"CMI must be positive, got {c} at n={n}")
    if n_addresses < max(n for n, _ in obs):
        raise ValueError("n_addresses is smaller than the finest observed scale")
    x = [math.log(n * n) for n, _ in obs]
    k = math.fsum(xi * c for xi, (_, c) in zip(x, obs)) / math.fsum(xi * xi for xi in x)
    return AcmiEstimate(k, obs, float(n_addresses), _acmi(k, obs, n_addresses))


def _acmi(k: float, observed, n_addresses: float) -> float:
    # Address changes include every regional move, so the estimate never
    # falls below an observed intensity when the scales disagree with the fit.
    return min(100.0, max(k * math.log(n_addresses**2), max(c for _, c in observed)))


def observed_scales(
    data: Source,
    filter: RecordFilter = ALL_RECORDS,
    *,
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> list[tuple[int, float]]:
    """(number of regions, CMI) at every scale the corpus supports."""
    hierarchy = hierarchy_of(data)
    scales = [Scale.major]
    if hierarchy.nested and {"region_minor_now", "region_minor_prev"} <= bound_fields(data):
        scales.append(Scale.minor)
    out = []
    for s in scales:
        value = cmi(data, s, filter, include_unknown_in_par=include_unknown_in_par,
                    weighted=weighted, workers=workers).value
        out.append((hierarchy.size(s), value))
    return out


# -- age-specific intensities --------------------------------------------


@dataclass(frozen=True)
class AgeProfile:
    """Values over ages: single years when raw, a half-year grid when smoothed.

    Raw profiles carry per-age ``par`` and ``migrants``; ages without
    population at risk are listed in ``missing_ages`` and hold NaN.
    """

    ages: np.ndarray
    values: np.ndarray
    scale: Scale = Scale.major
    normalized: bool = False
    smoothed: bool = False
    missing_ages: tuple[int, ...] = ()
    par: np.ndarray | None = None
    migrants: np.ndarray | None = None
    label: str = ""

    def to_table(self) -> Table:
        meta = {"scale": self.scale.value, "normalized": self.normalized, "smoothed": self.smoothed}
        if self.label:
            meta["label"] = self.label
        return Table(["age", "value"], [[float(a), float(v)] for a, v in zip(self.ages, self.values)], meta)


def asmi(
    data: Source,
    scale: Scale | str = Scale.major,
    ages: tuple[int, int] = (MIN_AGE, MAX_AGE),
    *,
    filter: RecordFilter = ALL_RECORDS,
    reason: Reason | None = None,
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> AgeProfile:
    """Migrants of age x over the population at risk of age x, as proportions.

    With ``reason`` only migrants citing that reason enter the numerator;
    the denominator stays the whole population at risk of that age.
    """
    scale = Scale.coerce(scale)
    lo, hi = ages
    dims = ("age", "reason") if reason is not None else ("age",)
    tally = accumulate(data, GroupTally(dims, scale, filter, include_unknown_in_par, weighted), workers)
    par, mig = tally.cube("par"), tally.cube("migrants")
    if reason is not None:
        par = par.sum(axis=1)
        mig = mig[:, int(reason)]
    par, mig = par[lo : hi + 1], mig[lo : hi + 1]
    if par.sum() <= 0:
        raise InsufficientDataError("no population at risk in the requested age range")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(par > 0, mig / np.where(par > 0, par, 1.0), np.nan)
    ages_arr = np.arange(lo, hi + 1, dtype=float)
    missing = tuple(int(a) for a, p in zip(ages_arr, par) if p <= 0)
    label = "all migrants" if reason is None else f"reason {Reason(reason).label}"
    return AgeProfile(ages_arr, values, scale, False, False, missing, par.copy(), mig.copy(), label)
