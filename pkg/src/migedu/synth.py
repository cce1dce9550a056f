"""Synthetic census generator with an exact ground-truth ledger.

Each person draws an age, sex and education level, then a move type
(stay, move between minor regions of one major region, move between
major regions) with probability

    p = base_rate[scale] * education_multiplier[education] * age_factor(age)

so that crude intensities by education are planted directly. Destination,
origin, settlement type, reason, schooling and duration follow. Records
are produced in fixed-size shards, each with its own generator spawned
from ``numpy.random.SeedSequence(seed)``, so output is byte-identical for
a given seed and config.

The ledger is tallied from the generator's own knowledge of who moved
where, not by re-classifying the written records, so it is an independent
oracle for the estimators.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from .errors import SchemaError
from .microdata.codes import Education, MigrantStatus, Reason, SettlementFlow
from .microdata.hierarchy import Region, RegionHierarchy
from .microdata.codes import Scale
from .microdata.records import RecordBatch
from .microdata.schema import Schema

AGES = np.arange(5, 66)
N_AGES = len(AGES)
STAY, INTRA, INTER = 0, 1, 2
RNG_ALGORITHM = "numpy PCG64, one stream per shard from SeedSequence(seed).spawn(n_shards)"
PROB_TOL = 1e-9

# Column names and codes of the emitted microdata.
COLUMNS = {
    "weight": "PERWT",
    "age": "AGE",
    "sex": "SEX",
    "education_level": "EDUC",
    "years_schooling": "YRSCHOOL",
    "region_minor_now": "GEO2",
    "region_major_now": "GEO1",
    "region_minor_prev": "MIGGEO2",
    "region_major_prev": "MIGGEO1",
    "urban_now": "URBAN",
    "urban_prev": "MIGURBAN",
    "duration_years": "DURATION",
    "reason": "MIGREASON",
}
EDUCATION_CODES = {"0": "LtPrimary", "1": "Primary", "2": "Secondary", "3": "Tertiary", "9": "Unknown"}
SEX_CODES = {"1": "M", "2": "F"}
URBAN_CODES = {"1": "Urban", "2": "Rural"}
REASON_CODES = {"1": "Employment", "2": "Education", "3": "Family", "4": "Marriage", "5": "Other"}
_EDU_OUT = np.array([0, 1, 2, 3, 9], dtype=np.int8)
_CORRUPTIONS = ("age=-1", "age=abc", "education=7", "weight=x")


@dataclass
class RegionSpec:
    region_id: str
    major: str
    area_km2: float = 1000.0
    pop_share: float = 1.0
    urban_prob: float = 0.5
    attractiveness: float = 1.0


@dataclass
class Band:
    """Categorical probabilities applying to ages ``min_age``..``max_age``."""

    min_age: int
    max_age: int
    probs: list[float]


def _default_regions() -> list[RegionSpec]:
    out = []
    for m in range(4):
        for k in range(3):
            out.append(RegionSpec(f"R{m}{k}", f"M{m}", 500.0 * (k + 1) * (m + 1), 1.0 + k, 0.3 + 0.15 * m))
    return out


@dataclass
class SynthConfig:
    n_records: int = 100_000
    regions: list[RegionSpec] = field(default_factory=_default_regions)
    age_weights: list[float] | None = None
    education_bands: list[Band] = field(default_factory=lambda: [Band(5, 65, [0.25, 0.25, 0.25, 0.25])])
    unknown_education_prob: float = 0.0
    female_prob: float = 0.5
    inter_rate: float = 0.05
    intra_rate: float = 0.05
    education_multipliers: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    unknown_education_multiplier: float = 1.0
    age_schedule: dict = field(default_factory=lambda: {"kind": "flat"})
    settlement_mix: list[float] | None = None
    settlement_mix_by_education: dict[str, list[float]] | None = None
    reason_bands: list[Band] = field(default_factory=lambda: [Band(5, 65, [0.4, 0.2, 0.2, 0.1, 0.1])])
    unknown_reason_prob: float = 0.0
    schooling: dict[str, list[float]] = field(
        default_factory=lambda: {"LtPrimary": [2.0, 1.5], "Primary": [6.0, 1.0], "Secondary": [10.0, 1.5],
                                 "Tertiary": [15.0, 1.5]}
    )
    duration_probs: list[float] = field(default_factory=lambda: [0.2, 0.2, 0.2, 0.2, 0.2])
    duration_topcode: int | None = None
    prev_unknown_prob: float = 0.0
    prev_minor_unknown_prob: float = 0.0
    collect: dict[str, bool] = field(
        default_factory=lambda: {"minor": True, "urban": True, "urban_prev": True, "reason": True,
                                 "years_schooling": True, "duration": True}
    )
    weights: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    corrupt_fraction: float = 0.0
    shard_size: int = 250_000

    # -- (de)serialisation ------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SynthConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown synth config key(s): {sorted(unknown)}")
        if "regions" in doc:
            doc["regions"] = [RegionSpec(**r) for r in doc["regions"]]
        for key in ("education_bands", "reason_bands"):
            if key in doc:
                doc[key] = [Band(**b) for b in doc[key]]
        if "collect" in doc:
            doc["collect"] = {**cls().collect, **doc["collect"]}
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise SchemaError(f"invalid synth config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def loads(cls, text: str) -> "SynthConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed synth config: {exc}") from exc

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        def probs(name, p, n):
            p = list(p)
            if len(p) != n:
                raise SchemaError(f"{name}: expected {n} probabilities, got {len(p)}")
            if any(x < 0 for x in p) or abs(math.fsum(p) - 1.0) > PROB_TOL:
                raise SchemaError(f"{name}: probabilities must be non-negative and sum to 1")

        def unit(name, x):
            if not 0.0 <= x <= 1.0:
                raise SchemaError(f"{name} must lie in [0, 1]")

        if self.n_records < 0:
            raise SchemaError("n_records must be non-negative")
        if self.shard_size < 1:
            raise SchemaError("shard_size must be positive")
        if not self.regions:
            raise SchemaError("at least one region is required")
        ids = [r.region_id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate region ids")
        for r in self.regions:
            if r.area_km2 <= 0 or r.pop_share <= 0 or r.attractiveness < 0:
                raise SchemaError(f"region {r.region_id}: area and pop_share must be positive")
            unit(f"region {r.region_id} urban_prob", r.urban_prob)
        if self.age_weights is not None:
            if len(self.age_weights) != N_AGES or any(w < 0 for w in self.age_weights) or sum(self.age_weights) <= 0:
                raise SchemaError(f"age_weights needs {N_AGES} non-negative values for ages 5..65")
        for label, bands, n in (("education", self.education_bands, 4), ("reason", self.reason_bands, 5)):
            covered = np.zeros(N_AGES, dtype=int)
            for b in bands:
                probs(f"{label} band {b.min_age}-{b.max_age}", b.probs, n)
                covered[(AGES >= b.min_age) & (AGES <= b.max_age)] += 1
            if np.any(covered != 1):
                raise SchemaError(f"{label} bands must cover ages 5..65 exactly once")
        for name in ("unknown_education_prob", "female_prob", "unknown_reason_prob", "prev_unknown_prob",
                     "prev_minor_unknown_prob", "corrupt_fraction"):
            unit(name, getattr(self, name))
        if len(self.education_multipliers) != 4 or any(m < 0 for m in self.education_multipliers):
            raise SchemaError("education_multipliers needs four non-negative values")
        if self.inter_rate < 0 or self.intra_rate < 0:
            raise SchemaError("move rates must be non-negative")
        f = age_factor(self.age_schedule)
        top = max(self.education_multipliers + [self.unknown_education_multiplier]) * float(f.max())
        if (self.inter_rate + self.intra_rate) * top > 1.0 + PROB_TOL:
            raise SchemaError("move probabilities exceed 1 for some education level and age")
        majors = {r.major for r in self.regions}
        if self.inter_rate > 0 and len(majors) < 2:
            raise SchemaError("moves between major regions need at least two major regions")
        if self.intra_rate > 0 and not self._intra_capable().any():
            raise SchemaError("moves within a major region need a major region with two or more minor regions")
        if self.settlement_mix is not None:
            probs("settlement_mix", self.settlement_mix, 4)
        if self.settlement_mix_by_education is not None:
            for level in ("LtPrimary", "Primary", "Secondary", "Tertiary", "Unknown"):
                if level not in self.settlement_mix_by_education:
                    raise SchemaError(f"settlement_mix_by_education lacks {level}")
                probs(f"settlement_mix_by_education[{level}]", self.settlement_mix_by_education[level], 4)
        for level in ("LtPrimary", "Primary", "Secondary", "Tertiary"):
            if level not in self.schooling or len(self.schooling[level]) != 2 or self.schooling[level][1] < 0:
                raise SchemaError(f"schooling needs [mean, sd] for {level}")
        probs("duration_probs", self.duration_probs, len(self.duration_probs))
        if self.duration_topcode is not None and self.duration_topcode < 0:
            raise SchemaError("duration_topcode must be non-negative")
        kind = self.weights.get("kind")
        if kind == "constant":
            if not self.weights.get("value", 1.0) >= 0:
                raise SchemaError("constant weight must be non-negative")
        elif kind == "uniform":
            if not 0 <= self.weights["low"] <= self.weights["high"]:
                raise SchemaError("uniform weights need 0 <= low <= high")
        else:
            raise SchemaError("weights kind must be 'constant' or 'uniform'")

    def _intra_capable(self) -> np.ndarray:
        counts: dict[str, int] = {}
        for r in self.regions:
            counts[r.major] = counts.get(r.major, 0) + 1
        return np.array([counts[r.major] >= 2 for r in self.regions])


def age_factor(schedule: dict) -> np.ndarray:
    """Relative move propensity at ages 5..65, scaled to a maximum of 1.

    Kinds: ``flat``; ``gaussian`` (peak, sd, floor); ``table`` (61
    values); ``mixture``: childhood ``a1*exp(-alpha1*x)``, a labour-force
    hump and an optional retirement hump, each
    ``a*exp(-alpha*(x-mu) - exp(-lam*(x-mu)))``, plus a constant ``level``.
    """
    kind = schedule.get("kind", "flat")
    x = AGES.astype(float)
    if kind == "flat":
        f = np.ones(N_AGES)
    elif kind == "gaussian":
        floor = schedule.get("floor", 0.0)
        f = floor + (1 - floor) * np.exp(-0.5 * ((x - schedule["peak"]) / schedule["sd"]) ** 2)
    elif kind == "table":
        f = np.asarray(schedule["values"], dtype=float)
        if f.shape != (N_AGES,):
            raise SchemaError(f"age schedule table needs {N_AGES} values")
    elif kind == "mixture":
        f = np.full(N_AGES, float(schedule.get("level", 0.0)))
        if "childhood" in schedule:
            a1, alpha1 = schedule["childhood"]
            f += a1 * np.exp(-alpha1 * x)
        for part in ("labour", "retirement"):
            if part in schedule:
                a, mu, alpha, lam = schedule[part]
                f += a * np.exp(-alpha * (x - mu) - np.exp(-lam * (x - mu)))
    else:
        raise SchemaError(f"unknown age schedule kind {kind!r}")
    if np.any(f < 0) or f.max() <= 0:
        raise SchemaError("age schedule must be non-negative with a positive maximum")
    return f / f.max()


# -- generation -----------------------------------------------------------


@dataclass
class _Shard:
    """Columns of one generated shard, with the generator's ground truth."""

    weight: np.ndarray
    age: np.ndarray
    sex: np.ndarray  # 0 M, 1 F
    education: np.ndarray  # Education codes
    move: np.ndarray  # STAY / INTRA / INTER
    dest: np.ndarray  # minor index
    origin: np.ndarray  # minor index
    prev_known: np.ndarray
    prev_minor_known: np.ndarray
    urban_now: np.ndarray  # 0 urban, 1 rural
    urban_prev: np.ndarray
    reason: np.ndarray  # Reason codes, Unknown for stayers
    schooling: np.ndarray  # NaN when unknown
    duration: np.ndarray  # -1 for stayers
    corrupt: np.ndarray  # index into _CORRUPTIONS, -1 if clean


class _Generator:
    def __init__(self, config: SynthConfig):
        config.validate()
        self.cfg = config
        regions = config.regions
        self.majors = sorted({r.major for r in regions})
        self.major_of = np.array([self.majors.index(r.major) for r in regions])
        pop = np.array([r.pop_share for r in regions], dtype=float)
        attr = np.array([r.attractiveness for r in regions], dtype=float)
        self.p_stay = pop / pop.sum()
        mover = pop * attr
        if mover.sum() <= 0:
            raise SchemaError("all regions have zero attractiveness")
        self.p_inter_dest = mover / mover.sum()
        intra = mover * config._intra_capable()
        self.p_intra_dest = intra / intra.sum() if intra.sum() > 0 else None
        self.pop = pop
        self.urban_prob = np.array([r.urban_prob for r in regions])
        self.age_p = (np.ones(N_AGES) if config.age_weights is None else np.asarray(config.age_weights, float))
        self.age_p = self.age_p / self.age_p.sum()
        self.factor = age_factor(config.age_schedule)
        self.mult = np.array(config.education_multipliers + [config.unknown_education_multiplier])

    def _banded(self, rng, age, bands, n_cat):
        out = np.zeros(len(age), dtype=np.int8)
        for b in bands:
            m = (age >= b.min_age) & (age <= b.max_age)
            out[m] = rng.choice(n_cat, size=int(m.sum()), p=np.asarray(b.probs) / math.fsum(b.probs))
        return out

    def shard(self, rng: np.random.Generator, n: int) -> _Shard:
        cfg = self.cfg
        age = AGES[rng.choice(N_AGES, size=n, p=self.age_p)].astype(np.int16)
        sex = (rng.random(n) < cfg.female_prob).astype(np.int8)
        edu = self._banded(rng, age, cfg.education_bands, 4)
        edu[rng.random(n) < cfg.unknown_education_prob] = Education.Unknown

        scale = self.mult[edu] * self.factor[age - 5]
        p_inter, p_intra = cfg.inter_rate * scale, cfg.intra_rate * scale
        u = rng.random(n)
        move = np.where(u < p_inter, INTER, np.where(u < p_inter + p_intra, INTRA, STAY)).astype(np.int8)

        n_reg = len(cfg.regions)
        dest = rng.choice(n_reg, size=n, p=self.p_stay)
        is_inter, is_intra = move == INTER, move == INTRA
        dest[is_inter] = rng.choice(n_reg, size=int(is_inter.sum()), p=self.p_inter_dest)
        if is_intra.any():
            dest[is_intra] = rng.choice(n_reg, size=int(is_intra.sum()), p=self.p_intra_dest)
        origin = dest.copy()
        # Origins are drawn in proportion to population among eligible regions.
        for j in range(len(self.majors)):
            rows = np.nonzero(is_inter & (self.major_of[dest] == j))[0]
            if len(rows):
                p = np.where(self.major_of != j, self.pop, 0.0)
                origin[rows] = rng.choice(n_reg, size=len(rows), p=p / p.sum())
        for i in range(n_reg):
            rows = np.nonzero(is_intra & (dest == i))[0]
            if len(rows):
                p = np.where((self.major_of == self.major_of[i]) & (np.arange(n_reg) != i), self.pop, 0.0)
                origin[rows] = rng.choice(n_reg, size=len(rows), p=p / p.sum())

        prev_known = rng.random(n) >= cfg.prev_unknown_prob
        prev_minor_known = prev_known & (rng.random(n) >= cfg.prev_minor_unknown_prob)

        urban_now = (rng.random(n) >= self.urban_prob[dest]).astype(np.int8)
        urban_prev = urban_now.copy()
        movers = move != STAY
        urban_prev[movers] = (rng.random(int(movers.sum())) >= self.urban_prob[origin[movers]]).astype(np.int8)
        if cfg.settlement_mix is not None or cfg.settlement_mix_by_education is not None:
            # Flow types RR, RU, UR, UU as (prev, now) with 0 urban, 1 rural.
            prev_of = np.array([1, 1, 0, 0], dtype=np.int8)
            now_of = np.array([1, 0, 1, 0], dtype=np.int8)
            flow = np.zeros(n, dtype=np.int8)
            if cfg.settlement_mix_by_education is not None:
                for level in Education:
                    rows = movers & (edu == level)
                    flow[rows] = rng.choice(4, size=int(rows.sum()), p=cfg.settlement_mix_by_education[level.label])
            else:
                flow[movers] = rng.choice(4, size=int(movers.sum()), p=cfg.settlement_mix)
            urban_prev[movers] = prev_of[flow[movers]]
            urban_now[movers] = now_of[flow[movers]]

        reason = np.full(n, Reason.Unknown, dtype=np.int8)
        drawn = self._banded(rng, age, cfg.reason_bands, 5)
        reason[movers] = drawn[movers]
        reason[movers & (rng.random(n) < cfg.unknown_reason_prob)] = Reason.Unknown

        schooling = np.full(n, np.nan)
        for level in (Education.LtPrimary, Education.Primary, Education.Secondary, Education.Tertiary):
            rows = edu == level
            mean, sd = cfg.schooling[level.label]
            schooling[rows] = np.round(np.maximum(rng.normal(mean, sd, int(rows.sum())), 0.0), 1)

        duration = np.full(n, -1, dtype=np.int16)
        duration[movers] = rng.choice(len(cfg.duration_probs), size=int(movers.sum()), p=cfg.duration_probs)
        if cfg.duration_topcode is not None:
            duration = np.where(duration > cfg.duration_topcode, cfg.duration_topcode, duration).astype(np.int16)

        w = cfg.weights
        if w["kind"] == "constant":
            weight = np.full(n, float(w.get("value", 1.0)))
        else:
            weight = np.round(rng.uniform(w["low"], w["high"], n), 2)

        corrupt = np.full(n, -1, dtype=np.int8)
        k = int(round(cfg.corrupt_fraction * n))
        if k:
            rows = np.sort(rng.choice(n, size=k, replace=False))
            corrupt[rows] = np.arange(k) % len(_CORRUPTIONS)
        return _Shard(weight, age, sex, edu, move, dest, origin, prev_known, prev_minor_known, urban_now,
                      urban_prev, reason, schooling, duration, corrupt)

    def shards(self, seed: int):
        cfg = self.cfg
        sizes = [min(cfg.shard_size, cfg.n_records - s) for s in range(0, cfg.n_records, cfg.shard_size)]
        children = np.random.SeedSequence(seed).spawn(len(sizes))
        for size, child in zip(sizes, children):
            yield self.shard(np.random.Generator(np.random.PCG64(child)), size)


# -- ledger ---------------------------------------------------------------

_FLOW_OF = np.array([[SettlementFlow.UU, SettlementFlow.UR], [SettlementFlow.RU, SettlementFlow.RR]], dtype=np.int8)


class _LedgerBuilder:
    """Weighted enumeration of the generator's ground truth over clean rows."""

    def __init__(self, config: SynthConfig, gen: _Generator):
        self.cfg = config
        self.gen = gen
        self.n_minor = len(config.regions)
        self.n_major = len(gen.majors)
        self.scales = ["major"] + (["minor"] if config.collect.get("minor", True) else [])
        self.records = 0
        self.corrupt = 0
        self.weight_total = 0.0
        self.max_dur = max(len(config.duration_probs), 1)
        z = np.zeros
        self.cube = {s: {"migrants": z((N_AGES, 5, 2)), "par": z((N_AGES, 5, 2))} for s in self.scales}
        self.reason_age = {s: z((N_AGES, 6)) for s in self.scales}
        self.flow_edu = {s: z((5, 5)) for s in self.scales}
        self.flow_dur_edu = z((5, self.max_dur, 5))
        self.region = {s: {k: z(self.n_major if s == "major" else self.n_minor) for k in ("inflow", "outflow", "par")}
                       for s in self.scales}
        self.od: dict[str, dict[tuple[int, int], float]] = {s: {} for s in self.scales}
        self.status = {a: {"weight": z(5), "sum": z(5)} for a in ("15+", "20-24")}
        self.dur_flow = {"weight": z((self.max_dur, 4)), "sum": z((self.max_dur, 4))}

    def add(self, sh: _Shard) -> None:
        ok = sh.corrupt < 0
        self.corrupt += int((~ok).sum())
        self.records += int(ok.sum())
        w = sh.weight[ok]
        self.weight_total += math.fsum(w.tolist())
        age_i = sh.age[ok] - 5
        edu = sh.education[ok].astype(np.int64)
        sex = sh.sex[ok].astype(np.int64)
        move = sh.move[ok]
        prev_known, prev_minor_known = sh.prev_known[ok], sh.prev_minor_known[ok]
        dest, origin = sh.dest[ok], sh.origin[ok]
        major_now, major_prev = self.gen.major_of[dest], self.gen.major_of[origin]
        flow = _FLOW_OF[sh.urban_prev[ok], sh.urban_now[ok]]
        if not self.cfg.collect.get("urban_prev", True) or not self.cfg.collect.get("urban", True):
            flow = np.full(len(w), SettlementFlow.Unknown, dtype=np.int8)
        inter = (move == INTER) & prev_known
        for s in self.scales:
            if s == "major":
                mig, par = inter, prev_known
                now, prev, n_reg, known_origin = major_now, major_prev, self.n_major, inter
            else:
                mig = inter | ((move == INTRA) & prev_minor_known)
                par = prev_minor_known | inter
                now, prev, n_reg, known_origin = dest, origin, self.n_minor, mig & prev_minor_known
            key = (age_i * 5 + edu) * 2 + sex
            size = N_AGES * 10
            self.cube[s]["migrants"] += np.bincount(key[mig], w[mig], size).reshape(N_AGES, 5, 2)
            self.cube[s]["par"] += np.bincount(key[par], w[par], size).reshape(N_AGES, 5, 2)
            rsn = sh.reason[ok].astype(np.int64)
            self.reason_age[s] += np.bincount((age_i * 6 + rsn)[mig], w[mig], N_AGES * 6).reshape(N_AGES, 6)
            self.flow_edu[s] += np.bincount((flow.astype(np.int64) * 5 + edu)[mig], w[mig], 25).reshape(5, 5)
            reg = self.region[s]
            reg["inflow"] += np.bincount(now[known_origin], w[known_origin], n_reg)
            reg["outflow"] += np.bincount(prev[known_origin], w[known_origin], n_reg)
            reg["par"] += np.bincount(now[par], w[par], n_reg)
            keys = prev[known_origin].astype(np.int64) * n_reg + now[known_origin]
            uniq, inv = np.unique(keys, return_inverse=True)
            sums = np.bincount(inv, w[known_origin], len(uniq))
            od = self.od[s]
            for k, v in zip(uniq.tolist(), sums.tolist()):
                pair = divmod(k, n_reg)
                od[pair] = od.get(pair, 0.0) + v
        dur = sh.duration[ok].astype(np.int64)
        has_dur = inter & (dur >= 0)
        self.flow_dur_edu += np.bincount(((flow.astype(np.int64) * self.max_dur + dur) * 5 + edu)[has_dur],
                                         w[has_dur], 5 * self.max_dur * 5).reshape(5, self.max_dur, 5)
        ys = sh.schooling[ok]
        known_ys = ~np.isnan(ys)
        urban = sh.urban_now[ok] == 0
        status = np.full(len(w), MigrantStatus.Unclassifiable, dtype=np.int64)
        stayer = prev_known & ~inter
        status[inter & urban] = MigrantStatus.UrbanInMigrant
        status[inter & ~urban] = MigrantStatus.RuralInMigrant
        status[stayer & urban] = MigrantStatus.UrbanStayer
        status[stayer & ~urban] = MigrantStatus.RuralStayer
        if not self.cfg.collect.get("urban", True):
            status[:] = MigrantStatus.Unclassifiable
        age = sh.age[ok]
        for label, m in (("15+", age >= 15), ("20-24", (age >= 20) & (age <= 24))):
            sel = m & known_ys
            self.status[label]["weight"] += np.bincount(status[sel], w[sel], 5)
            self.status[label]["sum"] += np.bincount(status[sel], (w * np.nan_to_num(ys))[sel], 5)
        sel = has_dur & known_ys & (flow < 4)
        k = dur[sel] * 4 + flow[sel]
        self.dur_flow["weight"] += np.bincount(k, w[sel], self.max_dur * 4).reshape(self.max_dur, 4)
        self.dur_flow["sum"] += np.bincount(k, (w * np.nan_to_num(ys))[sel], self.max_dur * 4).reshape(self.max_dur, 4)

    def to_dict(self, seed: int, config: SynthConfig) -> dict:
        def lst(a):
            return np.asarray(a).tolist()

        return {
            "algorithm": RNG_ALGORITHM,
            "seed": seed,
            "shard_size": config.shard_size,
            "n_records": config.n_records,
            "valid_records": self.records,
            "corrupt_records": self.corrupt,
            "weight_total": self.weight_total,
            "majors": self.gen.majors,
            "minors": [r.region_id for r in config.regions],
            "scales": self.scales,
            "cube_axes": ["age 5..65", "education", "sex M,F"],
            "cube": {s: {k: lst(v) for k, v in c.items()} for s, c in self.cube.items()},
            "reason_by_age": {s: lst(v) for s, v in self.reason_age.items()},
            "flow_by_education": {s: lst(v) for s, v in self.flow_edu.items()},
            "major_flow_duration_education": lst(self.flow_dur_edu),
            "regions": {s: {k: lst(v) for k, v in r.items()} for s, r in self.region.items()},
            "od": {s: [[o, d, v] for (o, d), v in sorted(od.items())] for s, od in self.od.items()},
            "schooling_by_status": {a: {k: lst(v) for k, v in d.items()} for a, d in self.status.items()},
            "schooling_by_duration_flow": {k: lst(v) for k, v in self.dur_flow.items()},
        }


class GroundTruth:
    """Read access to a generator ledger with a few derived indicators."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.cube = {s: {k: np.asarray(v) for k, v in c.items()} for s, c in doc["cube"].items()}

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        return cls(json.loads(Path(path).read_text()))

    def __getitem__(self, key):
        return self.doc[key]

    def _sel(self, scale: str, measure: str, min_age=None, max_age=None, educations=None) -> float:
        c = self.cube[scale][measure]
        ages = AGES
        m = np.ones(N_AGES, dtype=bool)
        if min_age is not None:
            m &= ages >= min_age
        if max_age is not None:
            m &= ages <= max_age
        c = c[m]
        if educations is not None:
            c = c[:, [int(e) for e in educations]]
        return math.fsum(c.ravel().tolist())

    def migrants(self, scale="major", **kw) -> float:
        return self._sel(scale, "migrants", **kw)

    def par(self, scale="major", **kw) -> float:
        return self._sel(scale, "par", **kw)

    def cmi(self, scale="major", **kw) -> float:
        return 100.0 * self.migrants(scale, **kw) / self.par(scale, **kw)

    def asmi(self, scale="major") -> np.ndarray:
        c = self.cube[scale]
        return c["migrants"].sum(axis=(1, 2)) / c["par"].sum(axis=(1, 2))

    def nmr(self, scale="major") -> np.ndarray:
        r = {k: np.asarray(v) for k, v in self.doc["regions"][scale].items()}
        return 100.0 * (r["inflow"] - r["outflow"]) / r["par"]


# -- output ----------------------------------------------------------------


def _schema(config: SynthConfig) -> Schema:
    c = config.collect
    fields = ["weight", "age", "sex", "education_level", "region_major_now", "region_major_prev"]
    if c.get("minor", True):
        fields += ["region_minor_now", "region_minor_prev"]
    for flag, name in (("urban", "urban_now"), ("urban_prev", "urban_prev"), ("reason", "reason"),
                       ("years_schooling", "years_schooling"), ("duration", "duration_years")):
        if c.get(flag, True):
            fields.append(name)
    order = [f for f in COLUMNS if f in fields]
    return Schema(
        columns={f: COLUMNS[f] for f in order},
        codes={"education": EDUCATION_CODES, "sex": SEX_CODES, "urban": URBAN_CODES, "reason": REASON_CODES},
        duration_topcode=config.duration_topcode,
    )


def build_hierarchy(config: SynthConfig, population_total: float | None = None) -> RegionHierarchy:
    """Regions of ``config``; populations are shares of ``population_total``."""
    total = float(config.n_records if population_total is None else population_total) or 1.0
    shares = np.array([r.pop_share for r in config.regions], dtype=float)
    shares = shares / shares.sum()
    majors_order = sorted({r.major for r in config.regions})
    minors = [
        Region(r.region_id, Scale.minor, r.major, r.area_km2, float(total * s), None,
               "urban" if r.urban_prob >= 0.5 else "rural")
        for r, s in zip(config.regions, shares)
    ]
    if config.collect.get("minor", True):
        return RegionHierarchy([Region(m, Scale.major) for m in majors_order], minors)
    majors = []
    for m in majors_order:
        kids = [k for k in minors if k.parent_id == m]
        majors.append(Region(m, Scale.major, None, math.fsum(k.area_km2 for k in kids),
                             math.fsum(k.population for k in kids)))
    return RegionHierarchy(majors)


def _shard_table(sh: _Shard, config: SynthConfig, gen: _Generator, schema: Schema) -> pa.Table:
    n = len(sh.age)
    minor_ids = pa.array([r.region_id for r in config.regions])
    major_ids = pa.array(gen.majors)
    cols: dict[str, pa.Array] = {}

    def region(idx, dictionary, valid):
        return pa.DictionaryArray.from_arrays(pa.array(idx.astype(np.int32), mask=~valid), dictionary)

    cols["weight"] = pa.array(sh.weight)
    cols["age"] = pa.array(sh.age)
    cols["sex"] = pa.array((sh.sex + 1).astype(np.int8))
    cols["education_level"] = pa.array(_EDU_OUT[sh.education])
    cols["years_schooling"] = pa.array(sh.schooling, mask=np.isnan(sh.schooling))
    cols["region_minor_now"] = region(sh.dest, minor_ids, np.ones(n, dtype=bool))
    cols["region_major_now"] = region(gen.major_of[sh.dest], major_ids, np.ones(n, dtype=bool))
    cols["region_minor_prev"] = region(sh.origin, minor_ids, sh.prev_minor_known)
    cols["region_major_prev"] = region(gen.major_of[sh.origin], major_ids, sh.prev_known)
    cols["urban_now"] = pa.array((sh.urban_now + 1).astype(np.int8))
    cols["urban_prev"] = pa.array((sh.urban_prev + 1).astype(np.int8))
    cols["duration_years"] = pa.array(sh.duration, mask=sh.duration < 0)
    cols["reason"] = pa.array((sh.reason + 1).astype(np.int8), mask=sh.reason == Reason.Unknown)

    bad = sh.corrupt >= 0
    if bad.any():
        for field_name, kind in (("age", 0), ("age", 1), ("education_level", 2), ("weight", 3)):
            rows = sh.corrupt == kind
            if not rows.any():
                continue
            text = _CORRUPTIONS[kind].split("=")[1]
            arr = cols[field_name]
            if not pa.types.is_string(arr.type):
                arr = pc.cast(arr, pa.string())
            cols[field_name] = pc.replace_with_mask(arr, pa.array(rows), pa.array([text] * int(rows.sum())))
    names = list(schema.columns)
    return pa.table({schema.columns[f]: cols[f] for f in names})


@dataclass
class SynthOutput:
    data: Path
    hierarchy: Path
    schema: Path
    ledger: Path
    truth: GroundTruth


def generate(config: SynthConfig, seed: int, out_dir: str | Path, stem: str = "synth") -> SynthOutput:
    """Write ``<stem>.csv``, ``<stem>_hierarchy.csv``, ``<stem>_schema.json`` and ``<stem>_ledger.json``."""
    gen = _Generator(config)
    schema = _schema(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.csv", out / f"{stem}_hierarchy.csv", out / f"{stem}_schema.json",
             out / f"{stem}_ledger.json"]
    ledger = _LedgerBuilder(config, gen)
    opts = pacsv.WriteOptions(include_header=False, quoting_style="none")
    with open(paths[0], "wb") as f:
        f.write((",".join(schema.columns.values()) + "\n").encode())
        for sh in gen.shards(seed):
            ledger.add(sh)
            pacsv.write_csv(_shard_table(sh, config, gen, schema), f, opts)
    paths[1].write_text(build_hierarchy(config).to_csv())
    paths[2].write_text(schema.dumps() + "\n")
    doc = ledger.to_dict(seed, config)
    paths[3].write_text(json.dumps(doc) + "\n")
    return SynthOutput(*paths, GroundTruth(doc))


def generate_batch(config: SynthConfig, seed: int) -> tuple[RecordBatch, GroundTruth]:
    """In-memory variant of :func:`generate` (corrupt rows are dropped)."""
    gen = _Generator(config)
    schema = _schema(config)
    hierarchy = build_hierarchy(config)
    ledger = _LedgerBuilder(config, gen)
    parts = []
    nested = config.collect.get("minor", True)
    c = config.collect
    for sh in gen.shards(seed):
        ledger.add(sh)
        ok = sh.corrupt < 0
        flow_known = c.get("urban", True)
        cols = dict(
            weight=sh.weight[ok],
            age=sh.age[ok],
            sex=sh.sex[ok],
            education=sh.education[ok],
            years_schooling=sh.schooling[ok] if c.get("years_schooling", True) else np.full(ok.sum(), np.nan),
            major_now=gen.major_of[sh.dest][ok],
            major_prev=np.where(sh.prev_known, gen.major_of[sh.origin], -1)[ok],
            urban_now=sh.urban_now[ok] if flow_known else np.full(ok.sum(), 2),
            urban_prev=sh.urban_prev[ok] if c.get("urban_prev", True) else np.full(ok.sum(), 2),
            duration=sh.duration[ok] if c.get("duration", True) else np.full(ok.sum(), -1),
            reason=sh.reason[ok] if c.get("reason", True) else np.full(ok.sum(), Reason.Unknown),
        )
        if config.duration_topcode is not None:
            cols["duration_topcoded"] = cols["duration"] >= config.duration_topcode
        if nested:
            cols["minor_now"] = sh.dest[ok]
            cols["minor_prev"] = np.where(sh.prev_minor_known, sh.origin, -1)[ok]
        parts.append(RecordBatch.from_columns(hierarchy, bound=schema.bound, **cols))
    if not parts:
        raise SchemaError("n_records is zero")
    return RecordBatch.concat(parts), GroundTruth(ledger.to_dict(seed, config))


# -- planted density system -------------------------------------------------


def generate_density_system(
    n_regions: int = 200,
    slope: float = -3.0,
    noise_sd: float = 1.0,
    seed: int = 0,
    gross_exchange: float = 0.02,
) -> tuple[RecordBatch, dict]:
    """Closed system of major regions whose NMR follows ``slope * ln(density)``.

    Planted NMR is ``slope * ln(d) + noise``, shifted by a constant so that
    net flows balance; only the intercept absorbs the shift. Records are
    weighted: one stayer record per region plus one record per
    origin-destination flow. Returns the batch and the planted values.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    log_d = rng.uniform(0.0, 6.0, n_regions)
    area = rng.uniform(100.0, 5000.0, n_regions)
    par = rng.uniform(5e4, 5e5, n_regions)
    nmr = slope * log_d + rng.normal(0.0, noise_sd, n_regions)
    nmr -= np.dot(nmr, par) / par.sum()
    net = nmr * par / 100.0
    # Greedy transport from net losers to net gainers gives exactly ``net``.
    flows: dict[tuple[int, int], float] = {}
    give = [[i, -net[i]] for i in np.argsort(net) if net[i] < 0]
    take = [[i, net[i]] for i in np.argsort(-net) if net[i] > 0]
    gi = ti = 0
    while gi < len(give) and ti < len(take):
        amount = min(give[gi][1], take[ti][1])
        key = (int(give[gi][0]), int(take[ti][0]))
        flows[key] = flows.get(key, 0.0) + amount
        give[gi][1] -= amount
        take[ti][1] -= amount
        if give[gi][1] <= 1e-12 * par.max():
            gi += 1
        if take[ti][1] <= 1e-12 * par.max():
            ti += 1
    # Symmetric exchanges add gross migration without moving the net.
    for _ in range(n_regions):
        a, b = rng.choice(n_regions, 2, replace=False)
        amount = gross_exchange * min(par[a], par[b]) * rng.random()
        flows[(int(a), int(b))] = flows.get((int(a), int(b)), 0.0) + amount
        flows[(int(b), int(a))] = flows.get((int(b), int(a)), 0.0) + amount
    inflow = np.zeros(n_regions)
    for (o, d), v in flows.items():
        inflow[d] += v
    stayers = par - inflow
    if np.any(stayers < 0):
        raise ValueError("flows exceed population; lower slope, noise or exchange")
    pop = par * rng.uniform(1.0, 1.2, n_regions)
    density = np.exp(log_d)
    area = pop / density
    majors = [Region(f"D{i:03d}", Scale.major, None, float(area[i]), float(pop[i])) for i in range(n_regions)]
    hierarchy = RegionHierarchy(majors)
    od = list(flows.items())
    now = np.concatenate([np.arange(n_regions), [d for (_, d), _ in od]])
    prev = np.concatenate([np.arange(n_regions), [o for (o, _), _ in od]])
    weight = np.concatenate([stayers, [v for _, v in od]])
    n = len(now)
    batch = RecordBatch.from_columns(
        hierarchy,
        age=np.full(n, 30),
        education=np.zeros(n, dtype=np.int8),
        major_now=now,
        major_prev=prev,
        weight=weight,
    )
    planted = {"nmr": nmr, "par": par, "log_density": np.log(hierarchy.densities(Scale.major)), "slope": slope,
               "noise_sd": noise_sd}
    return batch, planted
