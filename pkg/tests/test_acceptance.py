"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``. Set MIGEDU_C10_RECORDS to shrink
the end-to-end timing run.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from migedu.age_profile import schedule
from migedu.engine import default_workers
from migedu.fixtures import check_cross_country, check_selectivity_table, check_sex_ratios, fit_cross_country
from migedu.flows import (
    composition_by_education_age,
    flow_matrix,
    reason_shares,
    secondary_plus_share_by_flow,
    settlement_shares,
    sex_ratio,
)
from migedu.intensity import AgeProfile, acmi_estimate, asmi, cmi, cmi_by_education, education_ratios
from migedu.microdata import MicrodataFile, load_hierarchy, load_schema
from migedu.redistribution import density_slope, nmr_by_region
from migedu.selectivity import attainment_by_duration, mys_by_duration, mys_by_status
from migedu.stats import weighted_ols
from migedu.synth import Band, SynthConfig, generate, generate_batch, generate_density_system

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []


def report(n, ok, detail):
    line = f"C{n} {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_c1_selectivity_table():
    t0 = time.perf_counter()
    res = check_selectivity_table()
    dt = time.perf_counter() - t0
    rows = {r[0]: r for r in res.rows}
    cam, sen = rows["Cameroon"], rows["Senegal"]
    examples = (f"Cameroon 15+ {cam[3]:.2f}/{cam[4]:.2f}, 20-24 {cam[1]:.2f}/{cam[2]:.2f}; "
                f"Senegal 15+ {sen[3]:.2f}/{sen[4]:.2f}")
    ok = res.passed and dt < 1.0
    assert report(1, ok, f"{res.detail}; {examples}; {dt:.3f} s")


def test_c2_sex_ratios():
    t0 = time.perf_counter()
    res = check_sex_ratios()
    india = sex_ratio(26.9, 2.1)
    dt = time.perf_counter() - t0
    ok = res.passed and abs(india - 12.8) <= 0.1 and dt < 1.0
    assert report(2, ok, f"{res.detail}; India minor {india:.2f}; {dt:.3f} s")


def test_c3_education_gradient():
    planted = (1.8, 2.8, 3.8)
    t0 = time.perf_counter()
    cfg = SynthConfig(n_records=1_000_000, inter_rate=0.2, intra_rate=0.05,
                      education_multipliers=[1.0, *planted], shard_size=250_000)
    batch, truth = generate_batch(cfg, seed=3)
    table = cmi_by_education(batch)
    got = education_ratios(table)
    major, minor = cmi(batch, "major").value, cmi(batch, "minor").value
    dt = time.perf_counter() - t0
    vals = tuple(got.ratio(l) for l in ("Primary", "Secondary", "Tertiary"))
    # Second route: ratios straight from the generator's ledger.
    base = truth.cmi("major", min_age=15, educations=[0])
    ledger = tuple(truth.cmi("major", min_age=15, educations=[e]) / base for e in (1, 2, 3))
    ok = (all(abs(v - p) <= 0.05 for v, p in zip(vals, planted)) and minor >= major
          and np.allclose(vals, ledger, rtol=1e-9) and dt < 10)
    assert report(3, ok, f"ratios {', '.join(f'{v:.3f}' for v in vals)} vs {planted} (tol 0.05); "
                         f"CMI minor {minor:.2f} >= major {major:.2f}; {dt:.1f} s")


def test_c4_peak_extraction():
    ages = np.arange(5, 66, dtype=float)
    values = 0.01 + 0.2 * np.exp(-0.5 * ((ages - 22.0) / 4.0) ** 2)
    prof, pk = schedule(AgeProfile(ages, values))
    _, pk_scaled = schedule(AgeProfile(ages, values * 17.3))
    total = float(prof.values.sum())
    ok = abs(pk.age_at_peak - 22.0) <= 0.5 and abs(total - 1) <= 1e-9 and pk_scaled.age_at_peak == pk.age_at_peak
    assert report(4, ok, f"peak {pk.age_at_peak:.1f} (planted 22.0), sum {total:.12f}, scaled peak {pk_scaled.age_at_peak:.1f}")


def test_c5_density_regression():
    batch, planted = generate_density_system(n_regions=200, slope=-3.0, noise_sd=1.0, seed=5)
    t = nmr_by_region(batch)
    fit = density_slope(t).fit
    within = abs(fit.slope + 3.0) <= 2 * fit.slope_stderr
    closure = abs(float(np.sum(t.nmr * t.par))) / float(np.sum(np.abs(t.nmr) * t.par))
    eq = density_slope(t, weights=np.ones(len(t.regions))).fit
    slope_u, icpt_u = np.polyfit(np.log(t.density), t.nmr, 1)
    eq_gap = max(abs(eq.slope - slope_u) / abs(slope_u), abs(eq.intercept - icpt_u) / abs(icpt_u))
    ok = within and closure <= 1e-6 and eq_gap <= 1e-9
    assert report(5, ok, f"slope {fit.slope:.4f} +- {fit.slope_stderr:.4f} (planted -3.0); "
                         f"closure {closure:.1e}; equal-weight vs unweighted {eq_gap:.1e}")


def test_c6_acmi():
    k = 0.7
    observed = [(n, k * math.log(n * n)) for n in (8, 60, 400)]
    est = acmi_estimate(observed, 1e6)
    grid = [400, 1e3, 1e4, 1e5, 1e6, 1e8]
    values = [est.at(n) for n in grid]
    monotone = all(b >= a for a, b in zip(values, values[1:]))
    ok = abs(est.courgeau_k - k) <= 1e-6 and monotone
    assert report(6, ok, f"k {est.courgeau_k:.9f} (planted 0.7); ACMI at 1e6 {est.acmi_value:.3f}; monotone {monotone}")


def test_c7_duration_flatness():
    cfg = SynthConfig(n_records=1_000_000, inter_rate=0.5, intra_rate=0.0, settlement_mix=[0.1, 0.5, 0.1, 0.3],
                      education_bands=[Band(5, 65, [0.35, 0.30, 0.20, 0.15])])
    batch, _ = generate_batch(cfg, seed=7)
    s = attainment_by_duration(batch)
    spread = max(s.values) - min(s.values)
    dev = max(abs(v - 35.0) for v in s.values)
    ok = dev <= 1.0
    assert report(7, ok, f"secondary+ by duration {', '.join(f'{v:.2f}' for v in s.values)}; "
                         f"max deviation from planted 35 {dev:.2f}, spread {spread:.2f}")


def test_c8_cross_country():
    res = check_cross_country()
    fit = fit_cross_country()
    report(8, res.passed, f"{res.detail}; n={len(fit.countries)} (non-blocking)")


def _indicators(src):
    out = {}
    for scale in ("major", "minor"):
        c = cmi(src, scale)
        out[f"cmi_{scale}"] = [c.migrants, c.par]
        out[f"od_{scale}"] = flow_matrix(src, scale).dense().ravel()
        out[f"nmr_{scale}"] = nmr_by_region(src, scale).nmr
    out["cmi_education"] = [x for r in cmi_by_education(src).rows for x in (r.migrants, r.par)]
    out["asmi"] = asmi(src).values
    out["settlement"] = [x for r in settlement_shares(src).rows for x in r.counts]
    out["secondary_plus"] = secondary_plus_share_by_flow(src).values
    out["composition"] = [x for r in composition_by_education_age(src).rows for x in r.counts]
    out["reasons"] = [x for r in reason_shares(src, by_sex=True).rows for x in r.counts]
    for ages in ("15+", "20-24"):
        out[f"mys_{ages}"] = mys_by_status(src, ages).means
    out["duration"] = attainment_by_duration(src).values
    out["duration_mys"] = mys_by_duration(src).means.ravel()
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def test_c9_workers(tmp_path):
    cfg = SynthConfig(n_records=1_000_000, inter_rate=0.06, intra_rate=0.05,
                      weights={"kind": "uniform", "low": 0.5, "high": 2.0}, unknown_reason_prob=0.05)
    out = generate(cfg, 9, tmp_path, "p")
    schema, hierarchy = load_schema(out.schema), load_hierarchy(out.hierarchy)
    chunk = 4 * 1024 * 1024
    one = _indicators(MicrodataFile(out.data, schema, hierarchy, workers=1, chunk_bytes=chunk))
    eight = _indicators(MicrodataFile(out.data, schema, hierarchy, workers=8, chunk_bytes=chunk))
    worst = 0.0
    for key in one:
        a, b = one[key], eight[key]
        assert np.array_equal(np.isnan(a), np.isnan(b)), key
        m = ~np.isnan(a)
        scale = np.maximum(np.abs(a[m]), 1e-300)
        worst = max(worst, float(np.max(np.abs(a[m] - b[m]) / scale, initial=0.0)))
    ok = worst <= 1e-9
    assert report(9, ok, f"{len(one)} indicators, 1 vs 8 workers, max relative gap {worst:.1e}")


def _timed_cli(path, workers):
    code = ("import resource, sys, time\n"
            "from migedu.cli import run\n"
            "t = time.perf_counter()\n"
            "rc = run(sys.argv[1:])\n"
            "dt = time.perf_counter() - t\n"
            "print(f'{rc} {dt} {resource.getrusage(resource.RUSAGE_SELF).ru_maxrss}', file=sys.stderr)\n")
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-c", code, "cmi", str(path), "--by", "education", "--workers",
                           str(workers), "-o", os.devnull], capture_output=True, text=True, check=True)
    wall = time.perf_counter() - t0
    rc, _, rss_kb = proc.stderr.strip().splitlines()[-1].split()
    return int(rc), wall, int(rss_kb) / 1024


def test_c10_end_to_end(tmp_path):
    n = int(os.environ.get("MIGEDU_C10_RECORDS", 10_000_000))
    cores = os.cpu_count() or 1
    workers = max(default_workers(), cores)
    cfg = SynthConfig(n_records=n, inter_rate=0.06, intra_rate=0.05, shard_size=500_000)
    big = generate(cfg, 10, tmp_path, "big")
    small = generate(SynthConfig(n_records=n // 10, inter_rate=0.06, intra_rate=0.05), 10, tmp_path, "small")
    rc, wall, rss = _timed_cli(big.data, workers)
    _, _, rss_small = _timed_cli(small.data, workers)
    bounded = rss <= 1.5 * rss_small + 64
    ok = rc == 0 and wall < 10.0 and bounded
    size = big.data.stat().st_size / 2**20
    detail = (f"{n:,} records ({size:.0f} MiB) in {wall:.2f} s with {workers} worker(s) on {cores} core(s); "
              f"peak RSS {rss:.0f} MiB vs {rss_small:.0f} MiB at {n // 10:,} records")
    report(10, ok, detail)
    assert rc == 0 and bounded
    if not ok and cores < 8:
        pytest.xfail(f"target assumes an 8-core machine; this one has {cores}")
    assert ok


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    tests = [v for k, v in sorted(globals().items(), key=lambda kv: int(kv[0][6:].split("_")[0]) if kv[0].startswith("test_c") else 0)
             if k.startswith("test_c")]
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except (AssertionError, pytest.xfail.Exception):
            pass
