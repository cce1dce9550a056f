"""Per-region net migration rates and their relation to population density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Source, accumulate, hierarchy_of
from .errors import InsufficientDataError
from .microdata.codes import KNOWN_EDUCATION, Education, Scale
from .microdata.hierarchy import RegionHierarchy
from .microdata.records import ALL_RECORDS, RecordBatch, RecordFilter
from .stats import LinearFit, NeumaierSum, weighted_ols
from .tables import Table

IN, OUT, PAR = range(3)


class RegionTally:
    """Inflow, outflow and population at risk per region.

    A migrant enters both the inflow of its destination and the outflow of
    its origin, so the system stays closed; migrants whose origin is not
    known at this scale are held apart in ``unknown_origin``.
    """

    def __init__(self, scale: Scale | str, n_regions: int, filter: RecordFilter = ALL_RECORDS,
                 include_unknown_in_par: bool = False, weighted: bool = True):
        self.scale = Scale.coerce(scale)
        self.n_regions = n_regions
        self.filter = filter
        self.include_unknown_in_par = include_unknown_in_par
        self.weighted = weighted
        self.sums = NeumaierSum((3, n_regions))
        self.unknown_origin = NeumaierSum(())

    def fresh(self) -> "RegionTally":
        return RegionTally(self.scale, self.n_regions, self.filter, self.include_unknown_in_par, self.weighted)

    def update(self, batch: RecordBatch) -> None:
        if len(batch) == 0:
            return
        n = self.n_regions
        mask = self.filter.mask(batch)
        w = batch.weight if self.weighted else np.ones(len(batch))
        now = batch.region(self.scale, "now")
        prev = batch.region(self.scale, "prev")
        at_risk = mask if self.include_unknown_in_par else mask & batch.is_classifiable(self.scale)
        mig = mask & batch.is_migrant(self.scale)
        self.unknown_origin.add(w[mig & (prev < 0)].sum())
        mig &= prev >= 0
        out = np.empty((3, n))
        out[IN] = np.bincount(now[mig], w[mig], n)
        out[OUT] = np.bincount(prev[mig], w[mig], n)
        out[PAR] = np.bincount(now[at_risk], w[at_risk], n)
        self.sums.add(out)

    def merge(self, other: "RegionTally") -> None:
        self.sums.merge(other.sums)
        self.unknown_origin.merge(other.unknown_origin)


@dataclass
class NmrTable:
    scale: Scale
    regions: list[str]
    inflow: np.ndarray
    outflow: np.ndarray
    par: np.ndarray
    density: np.ndarray
    stratum: str = "All"
    unknown_origin: float = 0.0

    @property
    def nmr(self) -> np.ndarray:
        """100 * (inflow - outflow) / PAR; NaN for regions without population at risk."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.par > 0, 100.0 * (self.inflow - self.outflow) / np.where(self.par > 0, self.par, 1.0), np.nan)

    def value(self, region: str) -> float | None:
        v = self.nmr[self.regions.index(region)]
        return None if np.isnan(v) else float(v)

    def to_table(self) -> Table:
        rows = []
        for i, r in enumerate(self.regions):
            nmr = self.nmr[i]
            rows.append([r, float(self.density[i]), float(self.par[i]), None if np.isnan(nmr) else float(nmr),
                         self.stratum, float(self.inflow[i]), float(self.outflow[i])])
        return Table(["region", "density", "par", "nmr", "stratum", "inflow", "outflow"], rows,
                     {"scale": self.scale.value, "unknown_origin": self.unknown_origin})


ADULTS = RecordFilter(min_age=15)


def nmr_by_region(
    data: Source,
    scale: Scale | str = Scale.major,
    education: Education | str | None = None,
    *,
    filter: RecordFilter | None = None,
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> NmrTable:
    """Net migration rate of every region in the hierarchy at ``scale``.

    With ``education`` the flows and population at risk are restricted to
    that level among people aged 15 and over.
    """
    scale = Scale.coerce(scale)
    hierarchy = hierarchy_of(data)
    stratum = "All"
    if filter is None:
        filter = ALL_RECORDS
        if education is not None:
            level = Education.parse(education) if isinstance(education, str) else Education(education)
            filter = RecordFilter(min_age=15, educations=frozenset({level}))
            stratum = level.label
    n = hierarchy.size(scale)
    tally = accumulate(data, RegionTally(scale, n, filter, include_unknown_in_par, weighted), workers)
    v = tally.sums.value
    return NmrTable(scale, hierarchy.ids(scale), v[IN], v[OUT], v[PAR], hierarchy.densities(scale), stratum,
                    float(tally.unknown_origin.value))


@dataclass(frozen=True)
class DensitySlope:
    fit: LinearFit
    stratum: str = "All"
    log_base: float = math.e
    weighting: str = "par"

    def to_table(self) -> Table:
        f = self.fit
        return Table(
            ["stratum", "slope", "intercept", "r_squared", "slope_stderr", "n_regions", "weight_total"],
            [[self.stratum, f.slope, f.intercept, f.r_squared, f.slope_stderr, f.n_points, f.weight_total]],
            {"log_base": self.log_base, "weighting": self.weighting},
        )


def density_slope(
    nmr: NmrTable,
    hierarchy: RegionHierarchy | None = None,
    *,
    log_base: float = math.e,
    weights: np.ndarray | NmrTable | None = None,
) -> DensitySlope:
    """Weighted regression of NMR on log population density.

    Weights default to each region's population at risk in ``nmr``; pass
    the unstratified table (or any per-region array) to weight stratified
    fits by total population instead.
    """
    if not (log_base > 0 and log_base != 1):
        raise ValueError("log base must be positive and different from 1")
    density = nmr.density if hierarchy is None else hierarchy.densities(nmr.scale)
    if weights is None:
        w, weighting = nmr.par, "par"
    elif isinstance(weights, NmrTable):
        w, weighting = weights.par, "total"
    else:
        w, weighting = np.asarray(weights, dtype=float), "custom"
    y = nmr.nmr
    keep = (nmr.par > 0) & ~np.isnan(density) & ~np.isnan(y)
    if np.any(density[keep] <= 0):
        raise ValueError("densities must be positive")
    if keep.sum() < 2:
        raise InsufficientDataError("need at least two regions with population at risk and density")
    x = np.log(density[keep]) / math.log(log_base)
    fit = weighted_ols(np.column_stack([x, y[keep]]), w[keep])
    return DensitySlope(fit, nmr.stratum, log_base, weighting)


def density_slopes_by_education(
    data: Source,
    scale: Scale | str = Scale.major,
    *,
    log_base: float = math.e,
    weighting: str = "par",
    include_unknown_in_par: bool = False,
    weighted: bool = True,
    workers: int | None = None,
) -> list[DensitySlope]:
    """Density slope for all records and for each education level (ages 15+)."""
    if weighting not in ("par", "total"):
        raise ValueError("weighting must be 'par' or 'total'")
    opts = dict(include_unknown_in_par=include_unknown_in_par, weighted=weighted, workers=workers)
    overall = nmr_by_region(data, scale, **opts)
    out = [density_slope(overall, log_base=log_base)]
    adults = nmr_by_region(data, scale, filter=ADULTS, **opts) if weighting == "total" else None
    for level in KNOWN_EDUCATION:
        table = nmr_by_region(data, scale, level, **opts)
        out.append(density_slope(table, log_base=log_base, weights=adults))
    return out
