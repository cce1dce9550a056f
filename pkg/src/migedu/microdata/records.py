"""Person records, columnar record batches and record-level classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ..errors import InsufficientDataError
from .codes import (
    NOT_A_MIGRANT,
    Education,
    MigrantStatus,
    MoveClass,
    Reason,
    Scale,
    SettlementFlow,
    Sex,
    UrbanStatus,
)
from .hierarchy import RegionHierarchy

MAX_AGE = 130


@dataclass(frozen=True, slots=True)
class PersonRecord:
    age: int
    education: Education
    major_now: str
    major_prev: str | None
    minor_now: str | None = None
    minor_prev: str | None = None
    weight: float = 1.0
    sex: Sex = Sex.Unknown
    years_schooling: float | None = None
    urban_now: UrbanStatus = UrbanStatus.Unknown
    urban_prev: UrbanStatus = UrbanStatus.Unknown
    duration_years: int | None = None
    duration_topcoded: bool = False
    reason: Reason = Reason.Unknown

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be non-negative")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


def classify_move(record: PersonRecord, hierarchy: RegionHierarchy | None = None) -> MoveClass:
    major_prev = record.major_prev
    if record.minor_prev is not None and hierarchy is not None and hierarchy.nested:
        major_prev = hierarchy.parent_of(record.minor_prev)
    if major_prev is not None and major_prev != record.major_now:
        return MoveClass.InterMajorMove
    minor_mode = record.minor_now is not None
    if minor_mode:
        if record.minor_prev is None:
            return MoveClass.Unclassifiable
        if record.minor_prev == record.minor_now:
            return MoveClass.Stayer
        return MoveClass.IntraMajorMove
    if major_prev is None:
        return MoveClass.Unclassifiable
    return MoveClass.Stayer


def classify_settlement_flow(record: PersonRecord) -> SettlementFlow:
    prev, now = record.urban_prev, record.urban_now
    if prev is UrbanStatus.Unknown or now is UrbanStatus.Unknown:
        return SettlementFlow.Unknown
    return _FLOW_OF[(prev, now)]


_FLOW_OF = {
    (UrbanStatus.Rural, UrbanStatus.Rural): SettlementFlow.RR,
    (UrbanStatus.Rural, UrbanStatus.Urban): SettlementFlow.RU,
    (UrbanStatus.Urban, UrbanStatus.Rural): SettlementFlow.UR,
    (UrbanStatus.Urban, UrbanStatus.Urban): SettlementFlow.UU,
}


def classify_migrant_status(record: PersonRecord, hierarchy: RegionHierarchy | None = None) -> MigrantStatus:
    """Urban/rural in-migrant or stayer, with migration judged between major regions."""
    move = classify_move(record, hierarchy)
    if record.urban_now is UrbanStatus.Unknown:
        return MigrantStatus.Unclassifiable
    urban = record.urban_now is UrbanStatus.Urban
    if move is MoveClass.InterMajorMove:
        return MigrantStatus.UrbanInMigrant if urban else MigrantStatus.RuralInMigrant
    if move is MoveClass.Unclassifiable:
        # Minor origin missing but the major origin may still be known.
        if record.major_prev is None or record.major_prev != record.major_now:
            return MigrantStatus.Unclassifiable
    return MigrantStatus.UrbanStayer if urban else MigrantStatus.RuralStayer


@dataclass(frozen=True)
class RecordFilter:
    """Predicate over age, sex and education; ``None`` means unrestricted."""

    min_age: int | None = None
    max_age: int | None = None
    sexes: frozenset[Sex] | None = None
    educations: frozenset[Education] | None = None

    def __post_init__(self):
        if self.sexes is not None:
            object.__setattr__(self, "sexes", frozenset(Sex(s) for s in self.sexes))
        if self.educations is not None:
            object.__setattr__(self, "educations", frozenset(Education(e) for e in self.educations))

    def __call__(self, record: PersonRecord) -> bool:
        if self.min_age is not None and record.age < self.min_age:
            return False
        if self.max_age is not None and record.age > self.max_age:
            return False
        if self.sexes is not None and record.sex not in self.sexes:
            return False
        if self.educations is not None and record.education not in self.educations:
            return False
        return True

    def mask(self, batch: "RecordBatch") -> np.ndarray:
        m = np.ones(len(batch), dtype=bool)
        if self.min_age is not None:
            m &= batch.age >= self.min_age
        if self.max_age is not None:
            m &= batch.age <= self.max_age
        if self.sexes is not None:
            m &= np.isin(batch.sex, [int(s) for s in self.sexes])
        if self.educations is not None:
            m &= np.isin(batch.education, [int(e) for e in self.educations])
        return m

    def describe(self) -> str:
        parts = []
        if self.min_age is not None or self.max_age is not None:
            lo = "" if self.min_age is None else str(self.min_age)
            hi = "+" if self.max_age is None else f"-{self.max_age}"
            parts.append(f"age {lo}{hi}" if lo else f"age <= {self.max_age}")
        if self.sexes is not None:
            parts.append("sex in " + ",".join(sorted(s.label for s in self.sexes)))
        if self.educations is not None:
            parts.append("education in " + ",".join(e.label for e in sorted(self.educations)))
        return "; ".join(parts) or "all records"


ALL_RECORDS = RecordFilter()
AGE_15_PLUS = RecordFilter(min_age=15)


_COLUMNS = {
    "weight": np.float64,
    "age": np.int16,
    "sex": np.int8,
    "education": np.int8,
    "years_schooling": np.float64,
    "minor_now": np.int32,
    "major_now": np.int32,
    "minor_prev": np.int32,
    "major_prev": np.int32,
    "urban_now": np.int8,
    "urban_prev": np.int8,
    "duration": np.int16,
    "duration_topcoded": np.bool_,
    "reason": np.int8,
}

_DEFAULTS = {
    "weight": 1.0,
    "sex": Sex.Unknown,
    "education": Education.Unknown,
    "years_schooling": np.nan,
    "minor_now": -1,
    "minor_prev": -1,
    "major_prev": -1,
    "urban_now": UrbanStatus.Unknown,
    "urban_prev": UrbanStatus.Unknown,
    "duration": -1,
    "duration_topcoded": False,
    "reason": Reason.Unknown,
}


@dataclass
class RecordBatch:
    """Columnar block of records.

    Region columns hold positions into ``hierarchy.ids(level)``; ``-1``
    marks an unknown or unbound region. ``bound`` lists the schema fields
    that were present in the source, so indicators can tell "unbound"
    apart from "all values unknown".
    """

    hierarchy: RegionHierarchy
    bound: frozenset[str]
    weight: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    education: np.ndarray
    years_schooling: np.ndarray
    minor_now: np.ndarray
    major_now: np.ndarray
    minor_prev: np.ndarray
    major_prev: np.ndarray
    urban_now: np.ndarray
    urban_prev: np.ndarray
    duration: np.ndarray
    duration_topcoded: np.ndarray
    reason: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.age)

    @classmethod
    def from_columns(cls, hierarchy: RegionHierarchy, bound: Iterable[str] | None = None, **columns) -> "RecordBatch":
        """Build a batch from arrays; omitted columns take their 'unknown' default.

        Region columns may be given as ids (strings) or positions.
        """
        n = len(columns["age"])
        if hierarchy.nested and "major_now" not in columns and "minor_now" in columns:
            minor = _region_positions(hierarchy, "minor_now", columns["minor_now"])
            columns["major_now"] = hierarchy.minor_parent[minor]
        data = {}
        for name, dtype in _COLUMNS.items():
            if name in columns:
                values = columns[name]
                if name.endswith(("_now", "_prev")) and name.startswith(("minor", "major")):
                    values = _region_positions(hierarchy, name, values)
                data[name] = np.asarray(values, dtype=dtype)
            elif name in _DEFAULTS:
                data[name] = np.full(n, _DEFAULTS[name], dtype=dtype)
            else:
                raise ValueError(f"column {name} is required")
            if len(data[name]) != n:
                raise ValueError(f"column {name} has length {len(data[name])}, expected {n}")
        known_minor_prev = data["minor_prev"] >= 0
        if hierarchy.nested and known_minor_prev.any():
            derived = np.where(known_minor_prev, hierarchy.minor_parent[np.maximum(data["minor_prev"], 0)], -1)
            data["major_prev"] = np.where(known_minor_prev, derived, data["major_prev"]).astype(np.int32)
        if bound is None:
            bound = _infer_bound(columns)
        return cls(hierarchy=hierarchy, bound=frozenset(bound), **data)

    @classmethod
    def from_records(
        cls, records: Iterable[PersonRecord], hierarchy: RegionHierarchy, bound: Iterable[str] | None = None
    ) -> "RecordBatch":
        recs = list(records)
        major = hierarchy.lookup(Scale.major)
        minor = hierarchy.lookup(Scale.minor)

        def pos(table, rid):
            return -1 if rid is None else table[rid]

        cols = dict(
            weight=[r.weight for r in recs],
            age=[r.age for r in recs],
            sex=[int(r.sex) for r in recs],
            education=[int(r.education) for r in recs],
            years_schooling=[np.nan if r.years_schooling is None else r.years_schooling for r in recs],
            minor_now=[pos(minor, r.minor_now) for r in recs],
            major_now=[pos(major, r.major_now) for r in recs],
            minor_prev=[pos(minor, r.minor_prev) for r in recs],
            major_prev=[pos(major, r.major_prev) for r in recs],
            urban_now=[int(r.urban_now) for r in recs],
            urban_prev=[int(r.urban_prev) for r in recs],
            duration=[-1 if r.duration_years is None else r.duration_years for r in recs],
            duration_topcoded=[r.duration_topcoded for r in recs],
            reason=[int(r.reason) for r in recs],
        )
        if bound is None:
            bound = {"age", "education_level", "region_major_now", "region_major_prev", "weight", "sex"}
            if any(r.minor_now is not None for r in recs):
                bound |= {"region_minor_now", "region_minor_prev"}
            for name, attr in (
                ("years_schooling", "years_schooling"),
                ("duration_years", "duration_years"),
            ):
                if any(getattr(r, attr) is not None for r in recs):
                    bound.add(name)
            if any(r.urban_now is not UrbanStatus.Unknown for r in recs):
                bound.add("urban_now")
            if any(r.urban_prev is not UrbanStatus.Unknown for r in recs):
                bound.add("urban_prev")
            if any(r.reason is not Reason.Unknown for r in recs):
                bound.add("reason")
        batch = cls.from_columns(hierarchy, bound=bound, **cols)
        return batch

    @classmethod
    def concat(cls, batches: list["RecordBatch"]) -> "RecordBatch":
        if not batches:
            raise ValueError("nothing to concatenate")
        first = batches[0]
        data = {name: np.concatenate([getattr(b, name) for b in batches]) for name in _COLUMNS}
        return cls(hierarchy=first.hierarchy, bound=first.bound, **data)

    def take(self, index) -> "RecordBatch":
        data = {name: getattr(self, name)[index] for name in _COLUMNS}
        return RecordBatch(hierarchy=self.hierarchy, bound=self.bound, **data)

    def with_weight(self, weight) -> "RecordBatch":
        data = {name: getattr(self, name) for name in _COLUMNS}
        data["weight"] = np.broadcast_to(np.asarray(weight, dtype=np.float64), len(self)).copy()
        return RecordBatch(hierarchy=self.hierarchy, bound=self.bound, **data)

    def batches(self) -> Iterator["RecordBatch"]:
        yield self

    # -- classification ---------------------------------------------------

    @property
    def minor_mode(self) -> bool:
        return self.hierarchy.nested and {"region_minor_now", "region_minor_prev"} <= self.bound

    def require(self, *fields: str, what: str | None = None) -> None:
        missing = [f for f in fields if f not in self.bound]
        if missing:
            raise InsufficientDataError(what or f"required field(s) unbound: {', '.join(missing)}")

    def move_class(self) -> np.ndarray:
        if "move_class" not in self._cache:
            inter = (self.major_prev >= 0) & (self.major_prev != self.major_now)
            out = np.full(len(self), MoveClass.Unclassifiable, dtype=np.int8)
            if self.minor_mode:
                known = self.minor_prev >= 0
                out[known & (self.minor_prev == self.minor_now)] = MoveClass.Stayer
                out[known & (self.minor_prev != self.minor_now)] = MoveClass.IntraMajorMove
            else:
                out[(self.major_prev >= 0) & (self.major_prev == self.major_now)] = MoveClass.Stayer
            out[inter] = MoveClass.InterMajorMove
            self._cache["move_class"] = out
        return self._cache["move_class"]

    def _check_scale(self, scale: Scale) -> None:
        if scale is Scale.minor and not self.minor_mode:
            raise InsufficientDataError("minor-scale regions are unavailable for this corpus")

    def is_migrant(self, scale: Scale | str) -> np.ndarray:
        scale = Scale.coerce(scale)
        self._check_scale(scale)
        mc = self.move_class()
        if scale is Scale.major:
            return mc == MoveClass.InterMajorMove
        return (mc == MoveClass.InterMajorMove) | (mc == MoveClass.IntraMajorMove)

    def is_classifiable(self, scale: Scale | str) -> np.ndarray:
        """Whether prior residence is known well enough to say mover or stayer at ``scale``."""
        scale = Scale.coerce(scale)
        self._check_scale(scale)
        if scale is Scale.major:
            return self.major_prev >= 0
        return self.move_class() != MoveClass.Unclassifiable

    def settlement_flow(self, scale: Scale | str) -> np.ndarray:
        """RR/RU/UR/UU/Unknown for migrants at ``scale``; ``NOT_A_MIGRANT`` otherwise."""
        prev, now = self.urban_prev, self.urban_now
        flow = np.full(len(self), SettlementFlow.Unknown, dtype=np.int8)
        known = (prev != UrbanStatus.Unknown) & (now != UrbanStatus.Unknown)
        # prev, now in {0 Urban, 1 Rural}: RR=0, RU=1, UR=2, UU=3.
        flow[known] = _FLOW_TABLE[prev[known], now[known]]
        flow[~self.is_migrant(scale)] = NOT_A_MIGRANT
        return flow

    def migrant_status(self) -> np.ndarray:
        migrant = self.is_migrant(Scale.major)
        stayer = (self.major_prev >= 0) & ~migrant
        urban = self.urban_now == UrbanStatus.Urban
        rural = self.urban_now == UrbanStatus.Rural
        out = np.full(len(self), MigrantStatus.Unclassifiable, dtype=np.int8)
        out[migrant & urban] = MigrantStatus.UrbanInMigrant
        out[migrant & rural] = MigrantStatus.RuralInMigrant
        out[stayer & urban] = MigrantStatus.UrbanStayer
        out[stayer & rural] = MigrantStatus.RuralStayer
        return out

    def region(self, scale: Scale | str, when: str) -> np.ndarray:
        scale = Scale.coerce(scale)
        self._check_scale(scale)
        return getattr(self, f"{scale.value}_{when}")

    # -- record view ------------------------------------------------------

    def records(self) -> Iterator[PersonRecord]:
        majors = self.hierarchy.ids(Scale.major)
        minors = self.hierarchy.ids(Scale.minor)
        for i in range(len(self)):
            ys = self.years_schooling[i]
            dur = int(self.duration[i])
            yield PersonRecord(
                age=int(self.age[i]),
                education=Education(int(self.education[i])),
                major_now=majors[self.major_now[i]],
                major_prev=None if self.major_prev[i] < 0 else majors[self.major_prev[i]],
                minor_now=None if self.minor_now[i] < 0 else minors[self.minor_now[i]],
                minor_prev=None if self.minor_prev[i] < 0 else minors[self.minor_prev[i]],
                weight=float(self.weight[i]),
                sex=Sex(int(self.sex[i])),
                years_schooling=None if np.isnan(ys) else float(ys),
                urban_now=UrbanStatus(int(self.urban_now[i])),
                urban_prev=UrbanStatus(int(self.urban_prev[i])),
                duration_years=None if dur < 0 else dur,
                duration_topcoded=bool(self.duration_topcoded[i]),
                reason=Reason(int(self.reason[i])),
            )


_FLOW_TABLE = np.array(
    [[SettlementFlow.UU, SettlementFlow.UR], [SettlementFlow.RU, SettlementFlow.RR]], dtype=np.int8
)


def _region_positions(hierarchy: RegionHierarchy, name: str, values) -> np.ndarray:
    values = list(values) if not isinstance(values, np.ndarray) else values
    if isinstance(values, np.ndarray) and values.dtype.kind in "iu":
        return values
    level = Scale.minor if name.startswith("minor") else Scale.major
    lookup = hierarchy.lookup(level)
    return np.array([-1 if v is None or (isinstance(v, (int, np.integer)) and v < 0)
                     else (int(v) if isinstance(v, (int, np.integer)) else lookup[v]) for v in values],
                    dtype=np.int32)


def _infer_bound(columns: dict) -> set[str]:
    names = {
        "weight": "weight",
        "age": "age",
        "sex": "sex",
        "education": "education_level",
        "years_schooling": "years_schooling",
        "minor_now": "region_minor_now",
        "major_now": "region_major_now",
        "minor_prev": "region_minor_prev",
        "major_prev": "region_major_prev",
        "urban_now": "urban_now",
        "urban_prev": "urban_prev",
        "duration": "duration_years",
        "reason": "reason",
    }
    bound = {names[c] for c in columns if c in names}
    bound |= {"age", "education_level", "region_major_now"}
    if "region_minor_prev" in bound:
        bound.add("region_major_prev")
    return bound
