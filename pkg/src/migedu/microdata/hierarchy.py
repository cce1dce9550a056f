"""Minor/major region nesting with per-region area, population and density."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .codes import Scale

HIERARCHY_COLUMNS = ("region_id", "level", "parent_id", "area_km2", "population")


@dataclass(frozen=True)
class Region:
    region_id: str
    level: Scale
    parent_id: str | None = None
    area_km2: float | None = None
    population: float | None = None
    density: float | None = None
    urban: str | None = None


@dataclass
class RegionHierarchy:
    """Two-level region tree.

    Minor regions each name one major parent. A hierarchy without minor
    regions runs in major-only mode. Regions are addressed by their
    position in ``ids(level)``; batches store those positions.
    """

    majors: list[Region]
    minors: list[Region] = field(default_factory=list)

    def __post_init__(self):
        self._index = {Scale.major: {}, Scale.minor: {}}
        for level, regions in ((Scale.major, self.majors), (Scale.minor, self.minors)):
            for i, region in enumerate(regions):
                if region.region_id in self._index[level]:
                    raise SchemaError(f"duplicate {level.value} region id {region.region_id!r}")
                self._index[level][region.region_id] = i
        parent = np.empty(len(self.minors), dtype=np.int32)
        for i, region in enumerate(self.minors):
            if region.parent_id not in self._index[Scale.major]:
                raise SchemaError(
                    f"minor region {region.region_id!r} has unknown major parent {region.parent_id!r}"
                )
            parent[i] = self._index[Scale.major][region.parent_id]
        self.minor_parent = parent
        self.majors = [self._with_density(r, i) for i, r in enumerate(self.majors)]
        self.minors = [self._with_density(r, None) for r in self.minors]

    def _with_density(self, region: Region, major_pos: int | None) -> Region:
        area, pop = region.area_km2, region.population
        if major_pos is not None and self.minors and (area is None or pop is None):
            kids = [m for m in self.minors if m.parent_id == region.region_id]
            if area is None and kids and all(k.area_km2 is not None for k in kids):
                area = math.fsum(k.area_km2 for k in kids)
            if pop is None and kids and all(k.population is not None for k in kids):
                pop = math.fsum(k.population for k in kids)
        density = region.density
        if area is not None and pop is not None:
            if area <= 0:
                raise SchemaError(f"region {region.region_id!r} has non-positive area")
            derived = pop / area
            if density is not None and abs(density - derived) > 1e-9 * max(abs(derived), 1e-300):
                raise SchemaError(
                    f"region {region.region_id!r}: supplied density {density} != population/area {derived}"
                )
            density = derived
        return Region(region.region_id, region.level, region.parent_id, area, pop, density, region.urban)

    @property
    def nested(self) -> bool:
        return bool(self.minors)

    def regions(self, level: Scale | str) -> list[Region]:
        return self.minors if Scale.coerce(level) is Scale.minor else self.majors

    def ids(self, level: Scale | str) -> list[str]:
        return [r.region_id for r in self.regions(level)]

    def size(self, level: Scale | str) -> int:
        return len(self.regions(level))

    def index(self, level: Scale | str, region_id: str) -> int:
        try:
            return self._index[Scale.coerce(level)][region_id]
        except KeyError:
            raise KeyError(f"unknown {Scale.coerce(level).value} region {region_id!r}") from None

    def lookup(self, level: Scale | str) -> dict[str, int]:
        return dict(self._index[Scale.coerce(level)])

    def parent_of(self, minor_id: str) -> str:
        return self.minors[self.index(Scale.minor, minor_id)].parent_id

    def densities(self, level: Scale | str) -> np.ndarray:
        return np.array(
            [np.nan if r.density is None else r.density for r in self.regions(level)], dtype=float
        )

    def populations(self, level: Scale | str) -> np.ndarray:
        return np.array(
            [np.nan if r.population is None else r.population for r in self.regions(level)], dtype=float
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HIERARCHY_COLUMNS + ("urban",))
        for r in self.majors + self.minors:
            writer.writerow([
                r.region_id,
                r.level.value,
                r.parent_id or "",
                "" if r.area_km2 is None else repr(r.area_km2),
                "" if r.population is None else repr(r.population),
                r.urban or "",
            ])
        return buf.getvalue()


def _opt_float(text: str | None, what: str, region_id: str) -> float | None:
    if text is None or text.strip() == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"region {region_id!r}: {what} is not numeric: {text!r}") from None


def parse_hierarchy(text: str) -> RegionHierarchy:
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in HIERARCHY_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"hierarchy file lacks column(s): {missing}")
    majors: list[Region] = []
    minors: list[Region] = []
    for row in reader:
        rid = (row["region_id"] or "").strip()
        if not rid:
            raise SchemaError("hierarchy row with empty region_id")
        level = (row["level"] or "").strip().lower()
        if level not in ("minor", "major"):
            raise SchemaError(f"region {rid!r}: level must be minor or major, got {row['level']!r}")
        region = Region(
            region_id=rid,
            level=Scale(level),
            parent_id=(row["parent_id"] or "").strip() or None,
            area_km2=_opt_float(row["area_km2"], "area_km2", rid),
            population=_opt_float(row["population"], "population", rid),
            density=_opt_float(row.get("density"), "density", rid),
            urban=(row.get("urban") or "").strip() or None,
        )
        if region.level is Scale.minor:
            if region.parent_id is None:
                raise SchemaError(f"minor region {rid!r} has no parent_id")
            minors.append(region)
        else:
            majors.append(region)
    if not majors:
        raise SchemaError("hierarchy defines no major regions")
    return RegionHierarchy(majors, minors)


def load_hierarchy(path: str | Path) -> RegionHierarchy:
    """Read a hierarchy CSV (region_id, level, parent_id, area_km2, population)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read hierarchy {path}: {exc}") from exc
    return parse_hierarchy(text)
