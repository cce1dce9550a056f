"""Origin-destination flows, composition of migrants and share tables.

Shares are taken over migrants whose category is known (education, reason,
settlement type). The mass with an unknown category is reported next to
the shares as its own row, with no share attached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import DIMENSIONS, GroupTally, Source, accumulate, bound_fields, hierarchy_of
from .errors import InsufficientDataError
from .intensity import AgeProfile, asmi
from .age_profile import DEFAULT_BANDWIDTH, normalize, smooth_profile
from .microdata.codes import (
    FLOW_TYPES,
    KNOWN_EDUCATION,
    KNOWN_REASONS,
    SECONDARY_PLUS,
    Education,
    Reason,
    Scale,
    SettlementFlow,
    Sex,
)
from .microdata.records import ALL_RECORDS, RecordBatch, RecordFilter
from .stats import NeumaierSum
from .tables import Table

STRATA = ("education", "age_group", "sex")


def require(data: Source, *fields: str, what: str | None = None) -> None:
    missing = [f for f in fields if f not in bound_fields(data)]
    if missing:
        raise InsufficientDataError(what or f"required field(s) unbound: {', '.join(missing)}")


def require_settlement(data: Source) -> None:
    require(data, "urban_prev", what="urban status of previous residence unavailable")
    require(data, "urban_now", what="urban status of current residence unavailable")


# -- origin-destination flows --------------------------------------------


class FlowTally:
    """Sparse weighted counts keyed by (origin, destination, stratum)."""

    def __init__(self, scale: Scale | str, n_regions: int, strat: str | None = None,
                 filter: RecordFilter = ALL_RECORDS, weighted: bool = True):
        if strat is not None and strat not in STRATA:
            raise ValueError(f"stratification must be one of {STRATA}")
        self.scale = Scale.coerce(scale)
        self.n_regions = n_regions
        self.strat = strat
        self.filter = filter
        self.weighted = weighted
        self.n_strata = DIMENSIONS[strat][0] if strat else 1
        self.keys = np.empty(0, dtype=np.int64)
        self.sums = NeumaierSum(0)
        self.unknown_origin = NeumaierSum(())

    def fresh(self) -> "FlowTally":
        return FlowTally(self.scale, self.n_regions, self.strat, self.filter, self.weighted)

    def update(self, batch: RecordBatch) -> None:
        if len(batch) == 0:
            return
        mig = batch.is_migrant(self.scale) & self.filter.mask(batch)
        w = batch.weight if self.weighted else np.ones(len(batch))
        origin = batch.region(self.scale, "prev")
        dest = batch.region(self.scale, "now")
        lost = mig & (origin < 0)
        self.unknown_origin.add(w[lost].sum())
        mig &= origin >= 0
        stratum = DIMENSIONS[self.strat][1](batch, self.scale)[mig] if self.strat else 0
        key = (origin[mig].astype(np.int64) * self.n_regions + dest[mig]) * self.n_strata + stratum
        uniq, inv = np.unique(key, return_inverse=True)
        self._add(uniq, np.bincount(inv, w[mig], len(uniq)))

    def _add(self, keys: np.ndarray, values: np.ndarray, comp: np.ndarray | None = None) -> None:
        union = np.union1d(self.keys, keys)
        if len(union) != len(self.keys):
            grown = NeumaierSum(len(union))
            pos = np.searchsorted(union, self.keys)
            grown.total[pos] = self.sums.total
            grown.comp[pos] = self.sums.comp
            self.keys, self.sums = union, grown
        incoming = np.zeros(len(self.keys))
        incoming[np.searchsorted(self.keys, keys)] = values
        self.sums.add(incoming)
        if comp is not None:
            extra = np.zeros(len(self.keys))
            extra[np.searchsorted(self.keys, keys)] = comp
            self.sums.add(extra)

    def merge(self, other: "FlowTally") -> None:
        self._add(other.keys, other.sums.total, other.sums.comp)
        self.unknown_origin.merge(other.unknown_origin)


@dataclass
class FlowMatrix:
    """Weighted migrant counts from origin to destination region.

    ``cells`` maps (origin id, destination id, stratum label) to a weighted
    count; the stratum label is ``"All"`` for unstratified matrices.
    """

    scale: Scale
    regions: list[str]
    cells: dict[tuple[str, str, str], float]
    strat: str | None = None
    strata: tuple[str, ...] = ("All",)
    unknown_origin: float = 0.0

    def dense(self, stratum: str | None = None) -> np.ndarray:
        idx = {r: i for i, r in enumerate(self.regions)}
        out = np.zeros((len(self.regions), len(self.regions)))
        for (o, d, s), v in self.cells.items():
            if stratum is None or s == stratum:
                out[idx[o], idx[d]] += v
        return out

    def cell(self, origin: str, destination: str, stratum: str = "All") -> float:
        return self.cells.get((origin, destination, stratum), 0.0)

    def outflows(self, stratum: str | None = None) -> dict[str, float]:
        return dict(zip(self.regions, self.dense(stratum).sum(axis=1).tolist()))

    def inflows(self, stratum: str | None = None) -> dict[str, float]:
        return dict(zip(self.regions, self.dense(stratum).sum(axis=0).tolist()))

    def total(self, stratum: str | None = None) -> float:
        return math.fsum(v for (_, _, s), v in self.cells.items() if stratum is None or s == stratum)

    def to_table(self) -> Table:
        rows = [[o, d, s, v] for (o, d, s), v in self.cells.items()]
        meta = {"scale": self.scale.value, "stratification": self.strat or "none",
                "unknown_origin": self.unknown_origin}
        return Table(["origin", "destination", "stratum", "weighted_count"], rows, meta)


def flow_matrix(
    data: Source,
    scale: Scale | str = Scale.major,
    strat: str | None = None,
    *,
    filter: RecordFilter = ALL_RECORDS,
    weighted: bool = True,
    workers: int | None = None,
) -> FlowMatrix:
    """Weighted origin-destination counts of migrants at ``scale``.

    Migrants whose origin region is unknown at this scale (a minor-scale
    mover with only the major origin recorded) are counted in
    ``unknown_origin`` instead of a cell.
    """
    scale = Scale.coerce(scale)
    hierarchy = hierarchy_of(data)
    n = hierarchy.size(scale)
    tally = accumulate(data, FlowTally(scale, n, strat, filter, weighted), workers)
    ids = hierarchy.ids(scale)
    labels = DIMENSIONS[strat][2] if strat else ["All"]
    n_strata = tally.n_strata
    values = tally.sums.value
    cells = {}
    for key, v in zip(tally.keys.tolist(), values.tolist()):
        od, s = divmod(key, n_strata)
        o, d = divmod(od, n)
        cells[(ids[o], ids[d], labels[s])] = v
    strata = tuple(labels) if strat else ("All",)
    return FlowMatrix(scale, ids, cells, strat, strata, float(tally.unknown_origin.value))


# -- share tables --------------------------------------------------------


@dataclass(frozen=True)
class ShareRow:
    key: tuple[str, ...]
    counts: tuple[float, ...]
    unknown: float

    @property
    def base(self) -> float:
        return math.fsum(self.counts)

    @property
    def shares(self) -> tuple[float, ...] | None:
        base = self.base
        if base <= 0:
            return None
        return tuple(100.0 * c / base for c in self.counts)

    def share(self, category: int) -> float | None:
        s = self.shares
        return None if s is None else s[category]


@dataclass
class ShareTable:
    """Percentage distribution over ``categories`` within each keyed row."""

    dims: tuple[str, ...]
    category_name: str
    categories: tuple[str, ...]
    rows: list[ShareRow]
    meta: dict = field(default_factory=dict)

    def row(self, *key: str) -> ShareRow:
        for r in self.rows:
            if r.key == key:
                return r
        raise KeyError(key)

    def share(self, category: str, *key: str) -> float | None:
        return self.row(*key).share(self.categories.index(category))

    def to_table(self) -> Table:
        out = []
        for r in self.rows:
            shares = r.shares
            for i, c in enumerate(self.categories):
                out.append(list(r.key) + [c, r.counts[i], None if shares is None else shares[i]])
            out.append(list(r.key) + ["Unknown", r.unknown, None])
        return Table(list(self.dims) + [self.category_name, "migrants", "share"], out, dict(self.meta))


DEFAULT_AGE_GROUPS = tuple((lo, lo + 4) for lo in range(15, 45, 5))


def composition_by_education_age(
    data: Source,
    scale: Scale | str = Scale.major,
    age_groups: Sequence[tuple[int, int]] = DEFAULT_AGE_GROUPS,
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> ShareTable:
    """Education mix of migrants within each age group (known-education base)."""
    scale = Scale.coerce(scale)
    tally = accumulate(data, GroupTally(("age", "education"), scale, weighted=weighted), workers)
    mig = tally.cube("migrants")
    rows = []
    for lo, hi in age_groups:
        block = mig[lo : hi + 1].sum(axis=0)
        rows.append(ShareRow((f"{lo}-{hi}",), tuple(float(block[e]) for e in KNOWN_EDUCATION),
                             float(block[Education.Unknown])))
    return ShareTable(("age_group",), "education", tuple(e.label for e in KNOWN_EDUCATION), rows,
                      {"scale": scale.value})


def settlement_shares(
    data: Source,
    scale: Scale | str = Scale.major,
    *,
    filter: RecordFilter = ALL_RECORDS,
    weighted: bool = True,
    workers: int | None = None,
) -> ShareTable:
    """Shares of migrants by rural/urban origin and destination."""
    scale = Scale.coerce(scale)
    require_settlement(data)
    tally = accumulate(data, GroupTally(("flow",), scale, filter, weighted=weighted), workers)
    mig = tally.cube("migrants")
    row = ShareRow((), tuple(float(mig[f]) for f in FLOW_TYPES), float(mig[SettlementFlow.Unknown]))
    if row.base <= 0:
        raise InsufficientDataError("no migrants with known urban status at both ends")
    return ShareTable((), "flow", tuple(f.label for f in FLOW_TYPES), [row], {"scale": scale.value})


@dataclass
class ShareSeries:
    """One percentage per key: ``100 * numerator / base``; empty bases are absent."""

    dim: str
    keys: tuple[str, ...]
    numerators: tuple[float, ...]
    bases: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> tuple[float | None, ...]:
        return tuple(None if b <= 0 else min(100.0, 100.0 * n / b) for n, b in zip(self.numerators, self.bases))

    def value(self, key: str) -> float | None:
        return self.values[self.keys.index(key)]

    def to_table(self) -> Table:
        rows = [[k, n, b, v] for k, n, b, v in zip(self.keys, self.numerators, self.bases, self.values)]
        return Table([self.dim, "numerator", "base", "value"], rows, dict(self.meta))


def secondary_plus_share_by_flow(
    data: Source,
    scale: Scale | str = Scale.major,
    *,
    filter: RecordFilter = ALL_RECORDS,
    weighted: bool = True,
    workers: int | None = None,
) -> ShareSeries:
    """Percentage of migrants with at least secondary education, per settlement flow type."""
    scale = Scale.coerce(scale)
    require_settlement(data)
    tally = accumulate(data, GroupTally(("flow", "education"), scale, filter, weighted=weighted), workers)
    mig = tally.cube("migrants")
    known = [float(mig[f, list(KNOWN_EDUCATION)].sum()) for f in FLOW_TYPES]
    if not any(k > 0 for k in known):
        raise InsufficientDataError("no known-education migrants")
    plus = [float(mig[f, list(SECONDARY_PLUS)].sum()) for f in FLOW_TYPES]
    unknown = float(mig[list(FLOW_TYPES), Education.Unknown].sum())
    return ShareSeries("flow", tuple(f.label for f in FLOW_TYPES), tuple(plus), tuple(known),
                       {"scale": scale.value, "unknown_education_migrants": unknown})


# -- reasons for moving --------------------------------------------------

YOUNG_ADULTS = RecordFilter(min_age=15, max_age=24)


def reason_shares(
    data: Source,
    scale: Scale | str = Scale.major,
    ages: tuple[int, int] = (15, 24),
    by_sex: bool = False,
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> ShareTable:
    """Distribution of migrants by main reason for moving (known-reason base).

    Rows: ``All`` and, with ``by_sex``, ``M`` and ``F``.
    """
    scale = Scale.coerce(scale)
    require(data, "reason", what="reason for moving unavailable")
    filt = RecordFilter(min_age=ages[0], max_age=ages[1])
    tally = accumulate(data, GroupTally(("sex", "reason"), scale, filt, weighted=weighted), workers)
    mig = tally.cube("migrants")

    def row(label, block):
        return ShareRow((label,), tuple(float(block[r]) for r in KNOWN_REASONS), float(block[Reason.Unknown]))

    rows = [row("All", mig.sum(axis=0))]
    if by_sex:
        rows += [row(Sex.M.label, mig[Sex.M]), row(Sex.F.label, mig[Sex.F])]
    return ShareTable(("sex",), "reason", tuple(r.label for r in KNOWN_REASONS), rows,
                      {"scale": scale.value, "ages": f"{ages[0]}-{ages[1]}"})


@dataclass(frozen=True)
class SexRatioTable:
    reasons: tuple[str, ...]
    men: tuple[float, ...]
    women: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(sex_ratio(m, w) for m, w in zip(self.men, self.women))

    def ratio(self, reason: str) -> float:
        return self.ratios[self.reasons.index(reason)]

    def to_table(self) -> Table:
        rows = [[r, m, w, q, _display(q)] for r, m, w, q in zip(self.reasons, self.men, self.women, self.ratios)]
        return Table(["reason", "men_share", "women_share", "ratio", "ratio_display"], rows)


def sex_ratio(men_share: float, women_share: float) -> float:
    """Men's share over women's share; infinite when only men's share is positive."""
    if women_share == 0:
        return math.inf if men_share > 0 else math.nan
    return men_share / women_share


def _display(q: float) -> str:
    if math.isnan(q):
        return ""
    if math.isinf(q):
        return "inf"
    return f"{q:.1f}"


def reason_sex_ratio(table: ShareTable) -> SexRatioTable:
    """Ratio of men's to women's share for every reason, from a by-sex table."""
    try:
        men, women = table.row(Sex.M.label), table.row(Sex.F.label)
    except KeyError:
        raise ValueError("reason table has no per-sex rows; build it with by_sex=True") from None
    if men.base <= 0 or women.base <= 0:
        raise InsufficientDataError("both sexes need migrants with a known reason")
    return SexRatioTable(table.categories, men.shares, women.shares)


def reason_age_profile(
    data: Source,
    reason: Reason | str,
    scale: Scale | str = Scale.major,
    bandwidth: float = DEFAULT_BANDWIDTH,
    *,
    weighted: bool = True,
    workers: int | None = None,
) -> AgeProfile:
    """Smoothed, normalised age profile of migrants citing ``reason``."""
    reason = Reason.parse(reason) if isinstance(reason, str) else Reason(reason)
    require(data, "reason", what="reason for moving unavailable")
    raw = asmi(data, scale, reason=reason, weighted=weighted, workers=workers)
    if not np.nansum(raw.migrants) > 0:
        raise InsufficientDataError(f"no migrants cite reason {reason.label}")
    return normalize(smooth_profile(raw, bandwidth))
