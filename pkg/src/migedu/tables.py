"""Flat output tables shared by every indicator (CSV and JSON encodings).

Floats are written with ``repr`` so CSV and JSON carry the same values to
the last bit. Absent cells are empty in CSV and ``null`` in JSON; infinite
ratios are written as ``inf``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return _json_value(value.item())
    return value


@dataclass
class Table:
    columns: Sequence[str]
    rows: list[Sequence[Any]]
    meta: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "meta": {k: _json_value(v) for k, v in self.meta.items()},
            "columns": list(self.columns),
            "rows": [{c: _json_value(v) for c, v in zip(self.columns, row)} for row in self.rows],
        }
        return json.dumps(doc, indent=2)

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown format {fmt!r}")


def parse_cell(text: str) -> Any:
    """Inverse of the CSV cell encoding for numeric cells."""
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text
