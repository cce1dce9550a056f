import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from migedu.microdata import RecordBatch, parse_hierarchy
from migedu.synth import SynthConfig, generate_batch

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SMALL_HIERARCHY = """region_id,level,parent_id,area_km2,population
A,major,,100,1000
B,major,,400,1000
a1,minor,A,50,600
a2,minor,A,50,400
b1,minor,B,400,1000
"""


@pytest.fixture(scope="session")
def small_hierarchy():
    return parse_hierarchy(SMALL_HIERARCHY)


def make_batch(hierarchy, **columns):
    """Batch from plain lists; region columns may be given as ids."""
    return RecordBatch.from_columns(hierarchy, **columns)


@pytest.fixture(scope="session")
def corpus():
    """A 60k-record synthetic corpus with every field collected, and its ledger."""
    cfg = SynthConfig(
        n_records=60_000,
        inter_rate=0.06,
        intra_rate=0.05,
        education_multipliers=[1.0, 1.8, 2.8, 3.8],
        unknown_education_prob=0.03,
        prev_unknown_prob=0.01,
        prev_minor_unknown_prob=0.02,
        unknown_reason_prob=0.05,
        weights={"kind": "uniform", "low": 0.5, "high": 2.0},
        age_schedule={"kind": "gaussian", "peak": 24, "sd": 6, "floor": 0.2},
        shard_size=20_000,
    )
    batch, truth = generate_batch(cfg, seed=11)
    return batch, truth


@pytest.fixture(scope="session")
def corpus_files(tmp_path_factory):
    """The same kind of corpus written to disk, with 1% corrupt rows."""
    from migedu.synth import generate

    cfg = SynthConfig(n_records=20_000, inter_rate=0.06, intra_rate=0.05,
                      education_multipliers=[1.0, 1.8, 2.8, 3.8], corrupt_fraction=0.01,
                      weights={"kind": "uniform", "low": 0.5, "high": 2.0}, shard_size=7_000)
    out = tmp_path_factory.mktemp("corpus")
    return generate(cfg, 5, out, "c")


def rel_close(a, b, tol=1e-9):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.allclose(a, b, rtol=tol, atol=tol * max(1.0, float(np.nanmax(np.abs(b))) if b.size else 1.0),
                       equal_nan=True)


# Acceptance lines ("C<n> PASS|FAIL ...") collected during the run and
# repeated at the end of the terminal report.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
