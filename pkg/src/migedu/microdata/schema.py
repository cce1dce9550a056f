"""Column bindings and code maps for a microdata file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import SchemaError
from .codes import CODE_MAP_DOMAINS

FIELDS = (
    "weight",
    "age",
    "sex",
    "education_level",
    "years_schooling",
    "region_minor_now",
    "region_major_now",
    "region_minor_prev",
    "region_major_prev",
    "urban_now",
    "urban_prev",
    "duration_years",
    "reason",
)

REQUIRED_FIELDS = ("age", "education_level")

DEFAULT_MISSING = ("", "NA")


def _identity_map(domain) -> dict[str, str]:
    return {label: label for label in domain.labels()}


@dataclass(frozen=True)
class Schema:
    """How the columns of a delimited microdata file map onto record fields.

    ``columns`` binds logical field names (see ``FIELDS``) to header names.
    ``codes`` holds one code map per categorical domain (``education``,
    ``sex``, ``urban``, ``reason``); a code missing from the map and not
    listed in ``missing_values`` makes the row invalid.
    """

    columns: Mapping[str, str]
    codes: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    delimiter: str = ","
    missing_values: tuple[str, ...] = DEFAULT_MISSING
    interval_years: int = 5
    duration_topcode: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", dict(self.columns))
        codes = {k: dict(v) for k, v in self.codes.items()}
        for name, domain in CODE_MAP_DOMAINS.items():
            codes.setdefault(name, _identity_map(domain))
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "missing_values", tuple(self.missing_values))
        self._validate()

    def _validate(self) -> None:
        unknown = set(self.columns) - set(FIELDS)
        if unknown:
            raise SchemaError(f"unknown field binding(s): {sorted(unknown)}")
        for name in REQUIRED_FIELDS:
            if name not in self.columns:
                raise SchemaError(f"missing required binding: {name}")
        if not ({"region_minor_now", "region_major_now"} & self.columns.keys()):
            raise SchemaError("missing required binding: region_minor_now or region_major_now")
        if not ({"region_minor_prev", "region_major_prev"} & self.columns.keys()):
            raise SchemaError("missing required binding: region_minor_prev or region_major_prev")
        if "region_minor_prev" in self.columns and "region_minor_now" not in self.columns:
            raise SchemaError("region_minor_prev is bound but region_minor_now is not")
        seen: dict[str, str] = {}
        for name, column in self.columns.items():
            if not isinstance(column, str) or not column:
                raise SchemaError(f"binding for {name} must be a non-empty column name")
            if column in seen:
                raise SchemaError(f"duplicate column binding: {column!r} bound to {seen[column]} and {name}")
            seen[column] = name
        for name, mapping in self.codes.items():
            if name not in CODE_MAP_DOMAINS:
                raise SchemaError(f"unknown code map: {name}")
            domain = CODE_MAP_DOMAINS[name]
            for code, label in mapping.items():
                if label not in domain.labels():
                    raise SchemaError(f"code map {name}: {code!r} maps to invalid label {label!r}")
        if len(self.delimiter) != 1:
            raise SchemaError("delimiter must be a single character")
        if self.interval_years < 1:
            raise SchemaError("interval_years must be positive")
        if self.duration_topcode is not None and self.duration_topcode < 0:
            raise SchemaError("duration_topcode must be non-negative")

    @property
    def bound(self) -> frozenset[str]:
        return frozenset(self.columns)

    def is_bound(self, name: str) -> bool:
        return name in self.columns

    @property
    def has_minor_scale(self) -> bool:
        return "region_minor_now" in self.columns and "region_minor_prev" in self.columns

    def to_dict(self) -> dict[str, Any]:
        return {
            "columns": dict(self.columns),
            "codes": {k: dict(v) for k, v in self.codes.items()},
            "delimiter": self.delimiter,
            "missing_values": list(self.missing_values),
            "interval_years": self.interval_years,
            "duration_topcode": self.duration_topcode,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Schema":
        if not isinstance(doc, Mapping):
            raise SchemaError("schema document must be a JSON object")
        extra = set(doc) - {"columns", "codes", "delimiter", "missing_values", "interval_years", "duration_topcode"}
        if extra:
            raise SchemaError(f"unknown schema key(s): {sorted(extra)}")
        if "columns" not in doc or not isinstance(doc["columns"], Mapping):
            raise SchemaError("schema document needs a 'columns' object")
        codes = doc.get("codes", {})
        if not isinstance(codes, Mapping) or not all(isinstance(v, Mapping) for v in codes.values()):
            raise SchemaError("'codes' must map domain names to objects")
        try:
            return cls(
                columns=doc["columns"],
                codes={k: {str(c): lab for c, lab in v.items()} for k, v in codes.items()},
                delimiter=doc.get("delimiter", ","),
                missing_values=tuple(doc.get("missing_values", DEFAULT_MISSING)),
                interval_years=int(doc.get("interval_years", 5)),
                duration_topcode=doc.get("duration_topcode"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc)) from exc

    @classmethod
    def loads(cls, text: str) -> "Schema":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc
        return cls.from_dict(doc)


def load_schema(path: str | Path) -> Schema:
    """Read and validate a JSON schema file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    return Schema.loads(text)
