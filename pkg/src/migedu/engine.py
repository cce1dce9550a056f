"""Partition-parallel weighted tallies over record batches.

A tally is any object with ``fresh()``, ``update(batch)`` and
``merge(other)``. ``accumulate`` feeds it batches from an in-memory batch,
a sequence of batches, or a :class:`MicrodataFile`. For files, chunk
boundaries depend only on the chunk size and partial tallies are merged in
chunk order, so the worker count does not change the result.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from typing import Iterable, Iterator

import numpy as np

from .microdata.codes import NOT_A_MIGRANT, Education, MigrantStatus, MoveClass, Reason, Scale, SettlementFlow, Sex
from .microdata.ingest import MicrodataFile, _Decoder, read_range
from .microdata.records import ALL_RECORDS, MAX_AGE, RecordBatch, RecordFilter
from .stats import NeumaierSum

WORKERS_ENV = "MIGEDU_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


Source = RecordBatch | MicrodataFile | Iterable[RecordBatch]


def bound_fields(data: Source) -> frozenset[str]:
    if isinstance(data, (RecordBatch, MicrodataFile)):
        return data.bound
    if isinstance(data, (list, tuple)) and data:
        return data[0].bound
    raise TypeError("cannot determine bound fields; pass a RecordBatch, list of batches or MicrodataFile")


def hierarchy_of(data: Source):
    if isinstance(data, (RecordBatch, MicrodataFile)):
        return data.hierarchy
    if isinstance(data, (list, tuple)) and data:
        return data[0].hierarchy
    raise TypeError("cannot determine hierarchy of data source")


def iter_batches(data: Source) -> Iterator[RecordBatch]:
    if isinstance(data, RecordBatch):
        yield data
    elif isinstance(data, MicrodataFile):
        yield from data.batches()
    else:
        yield from data


# Worker-process state, installed once per process by the pool initializer.
_WORKER: dict = {}


def _init_worker(path, schema, hierarchy, header):
    _WORKER["path"] = path
    _WORKER["decoder"] = _Decoder(schema, hierarchy, header)


def _run_chunk(args):
    start, end, template = args
    batch, report = _WORKER["decoder"].parse(read_range(_WORKER["path"], start, end))
    tally = template.fresh()
    tally.update(batch)
    return tally, report


def accumulate(data: Source, tally, workers: int | None = None):
    """Run ``tally`` over every batch of ``data`` and return it."""
    if isinstance(data, MicrodataFile):
        n = workers or data.workers or default_workers()
        chunks = data.chunks()
        data.report = type(data.report)()
        if n > 1 and len(chunks) > 1:
            ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
            template = tally.fresh()
            with ctx.Pool(
                processes=min(n, len(chunks)),
                initializer=_init_worker,
                initargs=(data.path, data.schema, data.hierarchy, data.header),
            ) as pool:
                for part, report in pool.imap(_run_chunk, [(a, b, template) for a, b in chunks]):
                    tally.merge(part)
                    data.report.update(report)
            return tally
        for start, end in chunks:
            batch, report = data.parse_range(start, end)
            part = tally.fresh()
            part.update(batch)
            tally.merge(part)
            data.report.update(report)
        return tally
    for batch in iter_batches(data):
        part = tally.fresh()
        part.update(batch)
        tally.merge(part)
    return tally


# -- grouped tally -------------------------------------------------------

DURATION_CAP = 99


def _age_group_labels():
    return [f"{lo}-{lo + 4}" for lo in range(0, MAX_AGE + 1, 5)]


def _duration_codes(batch, scale):
    d = batch.duration.astype(np.int32)
    return np.where((d < 0) | (d > DURATION_CAP), DURATION_CAP + 1, d)


DIMENSIONS = {
    "education": (len(Education), lambda b, s: b.education, Education.labels()),
    "sex": (len(Sex), lambda b, s: b.sex, Sex.labels()),
    "age": (MAX_AGE + 1, lambda b, s: b.age, [str(a) for a in range(MAX_AGE + 1)]),
    "age_group": (MAX_AGE // 5 + 1, lambda b, s: b.age // 5, _age_group_labels()),
    "reason": (len(Reason), lambda b, s: b.reason, Reason.labels()),
    "flow": (NOT_A_MIGRANT + 1, lambda b, s: b.settlement_flow(s), SettlementFlow.labels() + ["NotMigrant"]),
    "status": (len(MigrantStatus), lambda b, s: b.migrant_status(), MigrantStatus.labels()),
    "move_class": (len(MoveClass), lambda b, s: b.move_class(), MoveClass.labels()),
    "duration": (DURATION_CAP + 2, _duration_codes, [str(d) for d in range(DURATION_CAP + 1)] + ["Unknown"]),
}

POPULATION, PAR, MIGRANTS, SCHOOLING_WEIGHT, SCHOOLING_SUM = range(5)
MEASURES = ("population", "par", "migrants", "schooling_weight", "schooling_sum")


class GroupTally:
    """Weighted counts over the cross-classification of ``dims``.

    Measures per cell: filtered population, population at risk (records
    whose prior residence is classifiable at ``scale``, or every record when
    ``include_unknown_in_par``), migrants at ``scale``, and the weight and
    weighted sum of known years of schooling.
    """

    def __init__(
        self,
        dims: tuple[str, ...] = (),
        scale: Scale | str = Scale.major,
        filter: RecordFilter = ALL_RECORDS,
        include_unknown_in_par: bool = False,
        weighted: bool = True,
    ):
        unknown = [d for d in dims if d not in DIMENSIONS]
        if unknown:
            raise ValueError(f"unknown dimension(s): {unknown}")
        self.dims = tuple(dims)
        self.scale = Scale.coerce(scale)
        self.filter = filter
        self.include_unknown_in_par = include_unknown_in_par
        self.weighted = weighted
        self.shape = tuple(DIMENSIONS[d][0] for d in self.dims)
        self.size = int(np.prod(self.shape)) if self.shape else 1
        self.sums = NeumaierSum((len(MEASURES), self.size))
        self.records = 0

    def fresh(self) -> "GroupTally":
        return GroupTally(self.dims, self.scale, self.filter, self.include_unknown_in_par, self.weighted)

    def _keys(self, batch: RecordBatch) -> np.ndarray:
        key = np.zeros(len(batch), dtype=np.int64)
        for d, size in zip(self.dims, self.shape):
            key = key * size + DIMENSIONS[d][1](batch, self.scale).astype(np.int64)
        return key

    def update(self, batch: RecordBatch) -> None:
        if len(batch) == 0:
            return
        mask = self.filter.mask(batch)
        w = batch.weight if self.weighted else np.ones(len(batch))
        migrant = batch.is_migrant(self.scale)
        at_risk = np.ones(len(batch), dtype=bool) if self.include_unknown_in_par else batch.is_classifiable(self.scale)
        key = self._keys(batch)[mask]
        w, migrant, at_risk = w[mask], migrant[mask], at_risk[mask]
        ys = batch.years_schooling[mask]
        known_ys = ~np.isnan(ys)
        out = np.empty((len(MEASURES), self.size))
        out[POPULATION] = np.bincount(key, w, self.size)
        out[PAR] = np.bincount(key[at_risk], w[at_risk], self.size)
        out[MIGRANTS] = np.bincount(key[migrant], w[migrant], self.size)
        out[SCHOOLING_WEIGHT] = np.bincount(key[known_ys], w[known_ys], self.size)
        out[SCHOOLING_SUM] = np.bincount(key[known_ys], (w * ys)[known_ys], self.size)
        self.sums.add(out)
        self.records += int(mask.sum())

    def merge(self, other: "GroupTally") -> None:
        self.sums.merge(other.sums)
        self.records += other.records

    def cube(self, measure: int | str) -> np.ndarray:
        if isinstance(measure, str):
            measure = MEASURES.index(measure)
        return self.sums.value[measure].reshape(self.shape)

    def labels(self, dim: str) -> list[str]:
        return DIMENSIONS[dim][2]
