import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from migedu.errors import InsufficientDataError
from migedu.selectivity import (
    MysTable,
    attainment_by_duration,
    cross_country_fit,
    mys_by_duration,
    mys_by_status,
    selectivity_ratios,
)
from migedu.microdata import RecordBatch
from migedu.microdata.codes import MigrantStatus
from migedu.synth import Band, SynthConfig, generate_batch

from conftest import make_batch, rel_close

U, R = 0, 1
STATUS_ORDER = ("UrbanInMigrant", "RuralInMigrant", "UrbanStayer", "RuralStayer")


def status_batch(h, means, n=10, age=30):
    """n records per status; each status carries a constant years of schooling."""
    # (major_prev, major_now, urban_now) for each status
    layout = [("A", "B", U), ("A", "B", R), ("B", "B", U), ("B", "B", R)]
    cols = {k: [] for k in ("major_prev", "major_now", "urban_now", "years_schooling")}
    for (prev, now, urb), m in zip(layout, means):
        cols["major_prev"] += [prev] * n
        cols["major_now"] += [now] * n
        cols["urban_now"] += [urb] * n
        cols["years_schooling"] += [m] * n
    return make_batch(h, age=[age] * 4 * n, education=[1] * 4 * n, **cols)


def test_constant_schooling(small_hierarchy):
    t = mys_by_status(status_batch(small_hierarchy, [6.0] * 4))
    assert t.means == (6.0, 6.0, 6.0, 6.0)
    r = selectivity_ratios(t)
    assert r.ratio_to_urban_stayers == 1.0 and r.ratio_to_rural_stayers == 1.0


def test_cameroon_like_means(small_hierarchy):
    planted = [7.93, 4.97, 6.61, 3.27]
    t = mys_by_status(status_batch(small_hierarchy, planted))
    assert np.allclose(t.means, planted, rtol=1e-12)
    r = selectivity_ratios(t)
    assert round(r.ratio_to_urban_stayers, 2) == 1.20
    assert round(r.ratio_to_rural_stayers, 2) == 2.43


def test_age_filter(small_hierarchy):
    young = status_batch(small_hierarchy, [10, 5, 8, 4], age=22)
    assert mys_by_status(young, "20-24").means == (10, 5, 8, 4)
    older = status_batch(small_hierarchy, [10, 5, 8, 4], age=40)
    t = mys_by_status(older, "20-24")
    assert t.means == (None, None, None, None)
    with pytest.raises(InsufficientDataError):
        selectivity_ratios(t)
    with pytest.raises(ValueError):
        mys_by_status(older, "30-34")


def test_minor_move_is_a_stayer(small_hierarchy):
    b = make_batch(small_hierarchy, age=[30, 30], education=[1, 1], minor_prev=["a1", "a1"],
                   minor_now=["a2", "b1"], urban_now=[U, U], years_schooling=[4.0, 12.0])
    t = mys_by_status(b)
    assert t.mean("UrbanStayer") == 4.0 and t.mean(MigrantStatus.UrbanInMigrant) == 12.0


def test_missing_schooling_leaves_mean_only(small_hierarchy):
    b = status_batch(small_hierarchy, [8.0, 5.0, 6.0, 4.0], n=2)
    ys = b.years_schooling.copy()
    ys[0] = np.nan
    t = mys_by_status(dataclasses.replace(b, years_schooling=ys))
    assert t.mean("UrbanInMigrant") == 8.0 and t.weights[0] == 1.0


def test_unbound_fields(small_hierarchy):
    b = make_batch(small_hierarchy, age=[30], education=[1], major_now=["A"], major_prev=["A"], urban_now=[U])
    with pytest.raises(InsufficientDataError, match="schooling"):
        mys_by_status(b)


def test_zero_reference_mean():
    t = MysTable.from_means({"UrbanInMigrant": 5.0, "UrbanStayer": 4.0, "RuralStayer": 0.0})
    with pytest.raises(InsufficientDataError, match="RuralStayer"):
        selectivity_ratios(t)


@given(st.lists(st.floats(0.5, 20), min_size=4, max_size=4), st.floats(0.01, 100))
def test_ratios_scale_free(means, c):
    a = selectivity_ratios(MysTable.from_means(dict(zip(STATUS_ORDER, means))))
    b = selectivity_ratios(MysTable.from_means(dict(zip(STATUS_ORDER, [m * c for m in means]))))
    assert math.isclose(a.ratio_to_urban_stayers, b.ratio_to_urban_stayers, rel_tol=1e-12)
    assert math.isclose(a.ratio_to_rural_stayers, b.ratio_to_rural_stayers, rel_tol=1e-12)


def test_means_lie_within_group_range(corpus):
    batch, _ = corpus
    t = mys_by_status(batch)
    lo, hi = np.nanmin(batch.years_schooling), np.nanmax(batch.years_schooling)
    assert all(lo <= m <= hi for m in t.means)


def test_status_means_match_ledger(corpus):
    batch, truth = corpus
    for ages in ("15+", "20-24"):
        led = truth["schooling_by_status"][ages]
        w, s = np.asarray(led["weight"]), np.asarray(led["sum"])
        t = mys_by_status(batch, ages)
        assert rel_close(t.weights, w[:4])
        assert rel_close(t.means, s[:4] / w[:4])


# -- cross-country -----------------------------------------------------------


def test_exact_linear_relation():
    xs = [2.0, 4.0, 6.0, 8.0, 10.0]
    fit = cross_country_fit({f"c{i}": (x, -0.15 * x + 2.71) for i, x in enumerate(xs)})
    assert fit.linear.slope == pytest.approx(-0.15, abs=1e-12)
    assert fit.linear.intercept == pytest.approx(2.71, abs=1e-12)
    assert fit.linear.r_squared == pytest.approx(1.0)


def test_constant_ratios_give_zero_exponent():
    fit = cross_country_fit({f"c{i}": (x, 1.7) for i, x in enumerate([1.0, 3.0, 5.0, 9.0])})
    assert fit.power.exponent == pytest.approx(0.0, abs=1e-12)
    assert fit.power.coefficient == pytest.approx(1.7)


def test_exclusions_and_missing():
    pts = {"a": (1.0, 3.0), "b": (2.0, 2.0), "c": (3.0, 1.0), "d": (None, 9.0), "Mali": (0.5, 9.0)}
    fit = cross_country_fit(pts, {"Mali"})
    assert fit.countries == ("a", "b", "c") and fit.dropped_missing == ("d",)
    assert fit.linear.slope == pytest.approx(-1.0)
    with pytest.raises(InsufficientDataError):
        cross_country_fit({"a": (1.0, 1.0), "b": (2.0, 2.0)})


# -- duration of residence ----------------------------------------------------


def duration_batch(h, durations, education, flow=(R, U), **kw):
    n = len(durations)
    return make_batch(h, age=[30] * n, education=education, major_prev=["A"] * n, major_now=["B"] * n,
                      urban_prev=[flow[0]] * n, urban_now=[flow[1]] * n, duration=durations, **kw)


def test_all_tertiary_by_duration(small_hierarchy):
    s = attainment_by_duration(duration_batch(small_hierarchy, [0, 1, 2, 3, 4], [3] * 5))
    assert s.keys == ("0", "1", "2", "3", "4") and s.values == (100.0,) * 5


def test_topcoded_duration_series(small_hierarchy):
    b = duration_batch(small_hierarchy, [0, 1, 2, 3, 4, 4, 4], [0, 1, 2, 3, 2, 3, 0],
                       duration_topcoded=[False] * 4 + [True] * 3)
    s = attainment_by_duration(b)
    assert len(s.values) == 5
    assert s.value("4") == pytest.approx(200 / 3)


def test_other_flows_and_unknown_duration_ignored(small_hierarchy):
    b = duration_batch(small_hierarchy, [0, 0, -1], [3, 0, 0])
    other = duration_batch(small_hierarchy, [0], [0], flow=(U, U))
    both = RecordBatch.concat([b, other])
    s = attainment_by_duration(both)
    assert s.value("0") == 50.0 and s.meta["unknown_duration_migrants"] == 1.0


def test_duration_needs_field(small_hierarchy):
    b = make_batch(small_hierarchy, age=[30], education=[1], major_prev=["A"], major_now=["B"],
                   urban_prev=[R], urban_now=[U])
    with pytest.raises(InsufficientDataError, match="duration"):
        attainment_by_duration(b)


def test_flat_duration_profile():
    cfg = SynthConfig(n_records=1_000_000, inter_rate=0.5, intra_rate=0.0, settlement_mix=[0.1, 0.5, 0.1, 0.3],
                      education_bands=[Band(5, 65, [0.35, 0.30, 0.20, 0.15])])
    batch, truth = generate_batch(cfg, seed=35)
    s = attainment_by_duration(batch)
    cube = np.asarray(truth["major_flow_duration_education"])[1]  # RU
    exact = [100 * cube[d, 2:4].sum() / cube[d, :4].sum() for d in range(len(s.values))]
    assert rel_close(s.values, exact)
    assert all(abs(v - 35.0) <= 1.0 for v in s.values)


def test_constant_mys_by_duration(small_hierarchy):
    b = duration_batch(small_hierarchy, [0, 1, 2, 2], [2] * 4, years_schooling=[8.0] * 4)
    m = mys_by_duration(b)
    assert m.durations == (0, 1, 2)
    assert all(m.mean(d, "RU") == 8.0 for d in m.durations)
    assert m.mean(0, "RR") is None


def test_mys_by_duration_matches_ledger(corpus):
    batch, truth = corpus
    m = mys_by_duration(batch)
    led = truth["schooling_by_duration_flow"]
    w, s = np.asarray(led["weight"]), np.asarray(led["sum"])
    k = len(m.durations)
    assert rel_close(m.weights, w[:k])
    with np.errstate(invalid="ignore"):
        assert rel_close(m.means, np.where(w[:k] > 0, s[:k] / w[:k], np.nan))
