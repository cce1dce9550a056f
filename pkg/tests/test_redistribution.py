import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from migedu.errors import InsufficientDataError
from migedu.redistribution import ADULTS, density_slope, density_slopes_by_education, nmr_by_region
from migedu.synth import generate_density_system

from conftest import make_batch, rel_close


def test_hand_nmr(small_hierarchy):
    # region B: 30 in, 10 out, 1000 at risk
    n_in, n_out, stay = 30, 10, 970
    cols = dict(
        major_prev=["A"] * n_in + ["B"] * n_out + ["B"] * stay,
        major_now=["B"] * n_in + ["A"] * n_out + ["B"] * stay,
    )
    n = n_in + n_out + stay
    t = nmr_by_region(make_batch(small_hierarchy, age=[30] * n, education=[1] * n, **cols))
    assert t.par[1] == 1000 and t.value("B") == pytest.approx(2.0)
    assert t.value("A") == pytest.approx(100 * (10 - 30) / 10)


def test_region_without_population_is_missing(small_hierarchy):
    t = nmr_by_region(make_batch(small_hierarchy, age=[30], education=[1], major_prev=["B"], major_now=["B"]))
    assert t.value("A") is None and t.value("B") == 0.0


def test_unknown_origin_excluded(small_hierarchy):
    b = make_batch(small_hierarchy, age=[30] * 2, education=[1] * 2, major_prev=[None, "B"], major_now=["A", "A"])
    t = nmr_by_region(b)
    assert t.inflow.tolist() == [1.0, 0.0] and t.unknown_origin == 0.0
    assert t.par[0] == 1.0
    t2 = nmr_by_region(b, include_unknown_in_par=True)
    assert t2.par[0] == 2.0


def test_balanced_exchange_gives_zero_slope(small_hierarchy):
    cols = dict(major_prev=["A"] * 5 + ["B"] * 5 + ["A"] * 50 + ["B"] * 80,
                major_now=["B"] * 5 + ["A"] * 5 + ["A"] * 50 + ["B"] * 80)
    b = make_batch(small_hierarchy, age=[30] * 140, education=[1] * 140, **cols)
    t = nmr_by_region(b)
    assert np.all(t.nmr == 0)
    assert density_slope(t).fit.slope == 0.0


def test_exact_log_density_relation():
    batch, planted = generate_density_system(n_regions=40, slope=2.5, noise_sd=0.0, seed=3)
    t = nmr_by_region(batch)
    assert rel_close(t.nmr, planted["nmr"], 1e-8)
    s = density_slope(t)
    assert s.fit.slope == pytest.approx(2.5, rel=1e-8)
    assert s.fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_planted_slope_recovered_within_two_se():
    batch, planted = generate_density_system(n_regions=200, slope=-3.0, noise_sd=1.0, seed=21)
    s = density_slope(nmr_by_region(batch))
    assert abs(s.fit.slope - planted["slope"]) <= 2 * s.fit.slope_stderr


def test_closed_system(corpus):
    batch, truth = corpus
    for scale in ("major", "minor"):
        t = nmr_by_region(batch, scale)
        assert abs(np.nansum(t.nmr * t.par) / 100) <= 1e-9 * t.inflow.sum()
        assert t.inflow.sum() == pytest.approx(t.outflow.sum(), rel=1e-12)


def test_nmr_matches_ledger(corpus):
    batch, truth = corpus
    for scale in ("major", "minor"):
        t = nmr_by_region(batch, scale)
        reg = truth["regions"][scale]
        assert rel_close(t.inflow, reg["inflow"]) and rel_close(t.outflow, reg["outflow"])
        assert rel_close(t.par, reg["par"])
        assert rel_close(t.nmr, truth.nmr(scale))


@given(st.floats(1.1, 100))
def test_log_base_rescales_slope(base):
    batch, _ = generate_density_system(n_regions=30, slope=-2.0, seed=4)
    t = nmr_by_region(batch)
    natural = density_slope(t).fit
    other = density_slope(t, log_base=base).fit
    assert other.slope == pytest.approx(natural.slope * math.log(base), rel=1e-9)
    assert other.intercept == pytest.approx(natural.intercept, rel=1e-9, abs=1e-9)
    assert other.r_squared == pytest.approx(natural.r_squared, rel=1e-9)


def test_equal_weights_match_unweighted_fit():
    batch, _ = generate_density_system(n_regions=30, slope=-2.0, seed=8)
    t = nmr_by_region(batch)
    fit = density_slope(t, weights=np.ones(len(t.regions))).fit
    x, y = np.log(t.density), t.nmr
    slope, intercept = np.polyfit(x, y, 1)
    assert fit.slope == pytest.approx(slope, rel=1e-9)
    assert fit.intercept == pytest.approx(intercept, rel=1e-9)


def test_slope_errors(small_hierarchy):
    b = make_batch(small_hierarchy, age=[30], education=[1], major_prev=["B"], major_now=["B"])
    t = nmr_by_region(b)
    with pytest.raises(InsufficientDataError):
        density_slope(t)
    with pytest.raises(ValueError):
        density_slope(t, log_base=1.0)


def test_education_strata(corpus):
    batch, truth = corpus
    slopes = density_slopes_by_education(batch)
    assert [s.stratum for s in slopes] == ["All", "LtPrimary", "Primary", "Secondary", "Tertiary"]
    strata = [nmr_by_region(batch, education=lvl) for lvl in ("LtPrimary", "Primary", "Secondary", "Tertiary")]
    adults = nmr_by_region(batch, filter=ADULTS)
    total_in = sum(t.inflow for t in strata)
    assert np.all(total_in <= adults.inflow + 1e-9)
    weighted = density_slopes_by_education(batch, weighting="total")
    assert all(s.weighting == "total" for s in weighted[1:])
    assert weighted[0].fit.slope == slopes[0].fit.slope
    with pytest.raises(ValueError):
        density_slopes_by_education(batch, weighting="area")
