"""Streaming ingestion of delimited census microdata.

Files are read in line-aligned byte chunks, so memory use depends on the
chunk size and not on the file size. Each chunk is parsed with pyarrow and
decoded column by column into a :class:`RecordBatch`. Rows that fail
validation are dropped and counted by reason in an :class:`IngestReport`;
they never abort a run.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from ..errors import DataValidationError
from .codes import CATEGORICAL_FIELDS, CODE_MAP_FOR_FIELD, Scale
from .hierarchy import RegionHierarchy
from .records import MAX_AGE, PersonRecord, RecordBatch
from .schema import Schema

DEFAULT_CHUNK_BYTES = 16 * 1024 * 1024

_DICT = pa.dictionary(pa.int32(), pa.string())


@dataclass
class IngestReport:
    """Row accounting for one ingestion run. Merging is commutative."""

    rows_read: int = 0
    rows_accepted: int = 0
    rejected: Counter = field(default_factory=Counter)

    @property
    def rows_rejected(self) -> int:
        return sum(self.rejected.values())

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(
            self.rows_read + other.rows_read,
            self.rows_accepted + other.rows_accepted,
            self.rejected + other.rejected,
        )

    def update(self, other: "IngestReport") -> None:
        self.rows_read += other.rows_read
        self.rows_accepted += other.rows_accepted
        self.rejected.update(other.rejected)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "rows_rejected": self.rows_rejected,
            "rejected_by_reason": dict(sorted(self.rejected.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Decoder:
    """Turns raw string columns of one chunk into validated record columns."""

    def __init__(self, schema: Schema, hierarchy: RegionHierarchy, header: list[str]):
        self.schema = schema
        self.hierarchy = hierarchy
        self.header = header
        missing = [c for c in schema.columns.values() if c not in header]
        if missing:
            raise DataValidationError(f"header lacks bound column(s): {missing}")
        if schema.has_minor_scale and not hierarchy.nested:
            raise DataValidationError("schema binds minor regions but the hierarchy has none")
        self.missing = frozenset(schema.missing_values)
        self.field_of = {col: name for name, col in schema.columns.items()}
        self.region_lookup = {
            Scale.major: hierarchy.lookup(Scale.major),
            Scale.minor: hierarchy.lookup(Scale.minor),
        }
        self.bound = schema.bound
        self.read_options = pacsv.ReadOptions(
            column_names=header, use_threads=False, block_size=1 << 30, encoding="utf8"
        )
        self.convert_options = pacsv.ConvertOptions(
            include_columns=list(schema.columns.values()),
            column_types={
                col: (pa.string() if name == "weight" else _DICT) for name, col in schema.columns.items()
            },
            strings_can_be_null=False,
            quoted_strings_can_be_null=False,
        )

    def parse(self, data: bytes) -> tuple[RecordBatch, IngestReport]:
        report = IngestReport()
        malformed = [0]

        def on_invalid(_row):
            malformed[0] += 1
            return "skip"

        if data.strip():
            parse_options = pacsv.ParseOptions(delimiter=self.schema.delimiter, invalid_row_handler=on_invalid)
            try:
                table = pacsv.read_csv(
                    io.BytesIO(data),
                    read_options=self.read_options,
                    parse_options=parse_options,
                    convert_options=self.convert_options,
                )
            except pa.ArrowInvalid as exc:
                raise DataValidationError(f"unreadable input: {exc}") from exc
            table = table.unify_dictionaries()
        else:
            table = None
        n = 0 if table is None else table.num_rows
        report.rows_read = n + malformed[0]
        if malformed[0]:
            report.rejected["malformed row"] += malformed[0]
        cols, reason = self._decode(table, n)
        ok = reason == 0
        report.rows_accepted = int(ok.sum())
        if not ok.all():
            codes, counts = np.unique(reason[~ok], return_counts=True)
            for code, count in zip(codes, counts):
                report.rejected[_REASONS[code - 1]] += int(count)
        cols = {k: v[ok] for k, v in cols.items()}
        batch = RecordBatch(hierarchy=self.hierarchy, bound=self.bound, **cols)
        return batch, report

    # -- column decoding --------------------------------------------------

    def _column(self, table, name):
        col = table.column(self.schema.columns[name])
        return col.combine_chunks() if col.num_chunks != 1 else col.chunk(0)

    def _dict_parts(self, table, name):
        arr = self._column(table, name)
        if not pa.types.is_dictionary(arr.type):
            arr = pc.dictionary_encode(arr)
        indices = arr.indices.to_numpy(zero_copy_only=False)
        values = [v.strip() for v in arr.dictionary.to_pylist()]
        return indices, values

    def _numeric(self, table, name):
        """Return (values, state) with state 0 ok, 1 missing, 2 non-numeric."""
        indices, values = self._dict_parts(table, name)
        nums, state = self._parse_numbers(values)
        return nums[indices], state[indices]

    def _weight(self, table):
        arr = self._column(table, "weight")
        try:
            return pc.cast(arr, pa.float64()).to_numpy(zero_copy_only=False), None
        except (pa.ArrowInvalid, pa.ArrowNotImplementedError):
            pass
        encoded = pc.dictionary_encode(arr)
        values = [v.strip() for v in encoded.dictionary.to_pylist()]
        nums, state = self._parse_numbers(values)
        idx = encoded.indices.to_numpy(zero_copy_only=False)
        return nums[idx], state[idx]

    def _parse_numbers(self, values):
        nums = np.empty(len(values), dtype=np.float64)
        state = np.zeros(len(values), dtype=np.int8)
        for i, text in enumerate(values):
            if text in self.missing:
                nums[i], state[i] = np.nan, 1
                continue
            try:
                value = float(text)
            except ValueError:
                value = np.nan
            if np.isfinite(value):
                nums[i] = value
            else:
                nums[i], state[i] = np.nan, 2
        return nums, state

    def _categorical(self, table, name):
        """Return codes with -1 for codes absent from the map."""
        domain = CATEGORICAL_FIELDS[name]
        mapping = self.schema.codes[CODE_MAP_FOR_FIELD[name]]
        indices, values = self._dict_parts(table, name)
        lut = np.empty(len(values), dtype=np.int8)
        for i, text in enumerate(values):
            if text in mapping:
                lut[i] = domain[mapping[text]]
            elif text in self.missing:
                lut[i] = domain.Unknown
            else:
                lut[i] = -1
        return lut[indices]

    def _regions(self, table, name, level):
        """Return positions with -1 missing and -2 unknown id."""
        lookup = self.region_lookup[level]
        indices, values = self._dict_parts(table, name)
        lut = np.empty(len(values), dtype=np.int32)
        for i, text in enumerate(values):
            if text in lookup:
                lut[i] = lookup[text]
            elif text in self.missing:
                lut[i] = -1
            else:
                lut[i] = -2
        return lut[indices]

    def _decode(self, table, n):
        reason = np.zeros(n, dtype=np.int8)

        def flag(mask, text):
            reason[(reason == 0) & mask] = _REASON_CODE[text]

        def bound(name):
            return name in self.bound

        cols = {}
        if n == 0:
            for key, dtype in _EMPTY.items():
                cols[key] = np.zeros(0, dtype=dtype)
            return cols, reason

        age, state = self._numeric(table, "age")
        flag(state == 1, "missing age")
        flag(state == 2, "non-numeric age")
        with np.errstate(invalid="ignore"):
            flag((age < 0) | (age > MAX_AGE), "age out of range")
            flag(np.isfinite(age) & (age != np.floor(age)), "non-integer age")
        cols["age"] = np.where(np.isfinite(age), age, 0).astype(np.int16)

        if bound("weight"):
            weight, state = self._weight(table)
            if state is not None:
                flag(state == 1, "missing weight")
                flag(state == 2, "non-numeric weight")
            with np.errstate(invalid="ignore"):
                flag(~np.isfinite(weight) & (reason == 0), "non-finite weight")
                flag(weight < 0, "negative weight")
            cols["weight"] = np.where(np.isfinite(weight), weight, 0.0)
        else:
            cols["weight"] = np.ones(n)

        for name, key in (("sex", "sex"), ("education_level", "education"), ("urban_now", "urban_now"),
                          ("urban_prev", "urban_prev"), ("reason", "reason")):
            domain = CATEGORICAL_FIELDS[name]
            if bound(name):
                codes = self._categorical(table, name)
                flag(codes < 0, f"unknown code in {name}")
                cols[key] = np.where(codes < 0, domain.Unknown, codes).astype(np.int8)
            else:
                cols[key] = np.full(n, domain.Unknown, dtype=np.int8)

        if bound("years_schooling"):
            ys, state = self._numeric(table, "years_schooling")
            flag(state == 2, "non-numeric years_schooling")
            with np.errstate(invalid="ignore"):
                flag(ys < 0, "negative years_schooling")
            cols["years_schooling"] = ys
        else:
            cols["years_schooling"] = np.full(n, np.nan)

        topcoded = np.zeros(n, dtype=bool)
        if bound("duration_years"):
            dur, state = self._numeric(table, "duration_years")
            flag(state == 2, "non-numeric duration_years")
            with np.errstate(invalid="ignore"):
                flag(dur < 0, "negative duration_years")
                flag(np.isfinite(dur) & (dur != np.floor(dur)), "non-integer duration_years")
            dur = np.where(np.isfinite(dur) & (dur >= 0), dur, -1)
            top = self.schema.duration_topcode
            if top is not None:
                topcoded = dur >= top
                dur = np.where(topcoded, top, dur)
            cols["duration"] = np.minimum(dur, np.iinfo(np.int16).max).astype(np.int16)
        else:
            cols["duration"] = np.full(n, -1, dtype=np.int16)
        cols["duration_topcoded"] = topcoded

        parent = self.hierarchy.minor_parent
        for when in ("now", "prev"):
            minor = np.full(n, -1, dtype=np.int32)
            major = np.full(n, -1, dtype=np.int32)
            if bound(f"region_minor_{when}"):
                minor = self._regions(table, f"region_minor_{when}", Scale.minor)
                flag(minor == -2, f"unknown region in region_minor_{when}")
            if bound(f"region_major_{when}"):
                major = self._regions(table, f"region_major_{when}", Scale.major)
                flag(major == -2, f"unknown region in region_major_{when}")
            minor = np.where(minor == -2, -1, minor)
            major = np.where(major == -2, -1, major)
            if self.hierarchy.nested and bound(f"region_minor_{when}"):
                derived = np.where(minor >= 0, parent[np.maximum(minor, 0)], -1)
                if bound(f"region_major_{when}"):
                    flag((minor >= 0) & (major >= 0) & (derived != major), "inconsistent region nesting")
                major = np.where(minor >= 0, derived, major).astype(np.int32)
            if when == "now":
                flag(major < 0, "missing current region")
            cols[f"minor_{when}"] = minor
            cols[f"major_{when}"] = major
        return cols, reason


_REASONS = (
    "missing age",
    "non-numeric age",
    "age out of range",
    "non-integer age",
    "missing weight",
    "non-numeric weight",
    "non-finite weight",
    "negative weight",
    "unknown code in sex",
    "unknown code in education_level",
    "unknown code in urban_now",
    "unknown code in urban_prev",
    "unknown code in reason",
    "non-numeric years_schooling",
    "negative years_schooling",
    "non-numeric duration_years",
    "negative duration_years",
    "non-integer duration_years",
    "unknown region in region_minor_now",
    "unknown region in region_major_now",
    "inconsistent region nesting",
    "missing current region",
    "unknown region in region_minor_prev",
    "unknown region in region_major_prev",
)
_REASON_CODE = {text: i + 1 for i, text in enumerate(_REASONS)}

_EMPTY = {
    "weight": np.float64, "age": np.int16, "sex": np.int8, "education": np.int8,
    "years_schooling": np.float64, "minor_now": np.int32, "major_now": np.int32,
    "minor_prev": np.int32, "major_prev": np.int32, "urban_now": np.int8, "urban_prev": np.int8,
    "duration": np.int16, "duration_topcoded": np.bool_, "reason": np.int8,
}


def read_header(path: str | Path, delimiter: str) -> tuple[list[str], int]:
    """Return the header fields and the byte offset where data rows start."""
    with open(path, "rb") as f:
        line = f.readline()
        offset = f.tell()
    text = line.decode("utf-8-sig").rstrip("\r\n")
    header = next(csv.reader([text], delimiter=delimiter), [])
    if not header:
        raise DataValidationError(f"{path}: empty file or missing header row")
    return header, offset


def plan_chunks(path: str | Path, start: int, chunk_bytes: int) -> list[tuple[int, int]]:
    """Split ``path`` from ``start`` to EOF into line-aligned byte ranges."""
    size = os.path.getsize(path)
    bounds = [start]
    with open(path, "rb") as f:
        pos = start
        while pos < size:
            target = pos + chunk_bytes
            if target >= size:
                break
            f.seek(target)
            f.readline()
            pos = f.tell()
            if pos >= size:
                break
            bounds.append(pos)
    bounds.append(size)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def read_range(path: str | Path, start: int, end: int) -> bytes:
    with open(path, "rb") as f:
        f.seek(start)
        return f.read(end - start)


class MicrodataFile:
    """A microdata file on disk, processed chunk by chunk.

    Indicator functions accept this object directly; with ``workers > 1``
    chunks are decoded and tallied in a process pool (see ``migedu.engine``).
    ``report`` holds the row accounting of the most recent pass.
    """

    def __init__(
        self,
        path: str | Path,
        schema: Schema,
        hierarchy: RegionHierarchy,
        *,
        workers: int | None = None,
        chunk_bytes: int = DEFAULT_CHUNK_BYTES,
    ):
        self.path = Path(path)
        self.schema = schema
        self.hierarchy = hierarchy
        self.workers = workers
        self.chunk_bytes = chunk_bytes
        try:
            self.header, self.data_offset = read_header(self.path, schema.delimiter)
        except OSError as exc:
            raise DataValidationError(f"cannot read {path}: {exc}") from exc
        self.decoder = _Decoder(schema, hierarchy, self.header)
        self.report = IngestReport()

    @property
    def bound(self) -> frozenset[str]:
        return self.schema.bound

    def chunks(self) -> list[tuple[int, int]]:
        return plan_chunks(self.path, self.data_offset, self.chunk_bytes)

    def parse_range(self, start: int, end: int) -> tuple[RecordBatch, IngestReport]:
        return self.decoder.parse(read_range(self.path, start, end))

    def batches(self) -> Iterator[RecordBatch]:
        self.report = IngestReport()
        for start, end in self.chunks():
            batch, report = self.parse_range(start, end)
            self.report.update(report)
            yield batch


def _stream_blocks(stream: IO, chunk_bytes: int) -> Iterator[bytes]:
    while True:
        lines = stream.readlines(chunk_bytes)
        if not lines:
            return
        block = "".join(lines) if isinstance(lines[0], str) else b"".join(lines)
        yield block.encode("utf-8") if isinstance(block, str) else block


def ingest_batches(
    source: str | Path | IO,
    schema: Schema,
    hierarchy: RegionHierarchy,
    *,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
) -> tuple[Iterator[RecordBatch], IngestReport]:
    """Stream ``source`` as record batches.

    The returned report is filled in as the iterator is consumed and is
    complete once it is exhausted. The header is checked eagerly.
    """
    report = IngestReport()
    if isinstance(source, (str, Path)):
        mf = MicrodataFile(source, schema, hierarchy, chunk_bytes=chunk_bytes)

        def gen():
            for start, end in mf.chunks():
                batch, part = mf.parse_range(start, end)
                report.update(part)
                yield batch

        return gen(), report

    first = source.readline()
    if isinstance(first, bytes):
        first = first.decode("utf-8-sig")
    header = next(csv.reader([first.lstrip("\ufeff").rstrip("\r\n")], delimiter=schema.delimiter), [])
    decoder = _Decoder(schema, hierarchy, header)

    def gen_stream():
        for block in _stream_blocks(source, chunk_bytes):
            batch, part = decoder.parse(block)
            report.update(part)
            yield batch

    return gen_stream(), report


def ingest(
    source: str | Path | IO,
    schema: Schema,
    hierarchy: RegionHierarchy,
    *,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
) -> tuple[Iterator[PersonRecord], IngestReport]:
    """Stream ``source`` as individual :class:`PersonRecord` values."""
    batches, report = ingest_batches(source, schema, hierarchy, chunk_bytes=chunk_bytes)

    def gen():
        for batch in batches:
            yield from batch.records()

    return gen(), report


def read_batch(source, schema: Schema, hierarchy: RegionHierarchy) -> tuple[RecordBatch, IngestReport]:
    """Load a whole (small) source into one batch."""
    batches, report = ingest_batches(source, schema, hierarchy)
    parts = list(batches)
    if not parts:
        empty, _ = _Decoder(schema, hierarchy, list(schema.columns.values())).parse(b"")
        return empty, report
    return RecordBatch.concat(parts), report
