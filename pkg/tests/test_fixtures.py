import pytest

from migedu.fixtures import (
    ALIASES,
    PUBLISHED_MEANS,
    SLOPE_INTERVAL,
    check_cross_country,
    fit_cross_country,
    mys_tables,
    national_mys_25plus,
    published_cmi_by_education,
    published_selectivity,
    read_rows,
    recomputed_selectivity,
    results_table,
    verify_fixtures,
)
from migedu.selectivity import selectivity_ratios


def test_tables_load():
    assert len(read_rows("mys_15plus")) == 29 and len(read_rows("mys_20_24")) == 29
    rows, means = published_selectivity()
    assert len(rows) == 29 and means == PUBLISHED_MEANS
    assert set(rows) == set(mys_tables("15+")) == set(mys_tables("20-24"))
    assert "Colombia" in rows and not set(ALIASES) & set(rows)


def test_missing_values_are_none():
    national = national_mys_25plus()
    assert national["Malawi"] is None and national["Cameroon"] == 5.3
    assert published_cmi_by_education("major")["Switzerland"]["Primary"] is None


def test_cameroon_ratios():
    r = selectivity_ratios(mys_tables("15+")["Cameroon"])
    assert round(r.ratio_to_urban_stayers, 2) == 1.20
    assert round(r.ratio_to_rural_stayers, 2) == 2.43
    assert recomputed_selectivity()["Cameroon"] == pytest.approx((9.97 / 9.35, 9.97 / 4.73, 7.93 / 6.61, 7.93 / 3.27))


def test_blocking_checks_pass():
    results = {r.name: r for r in verify_fixtures()}
    assert set(results) == {"selectivity_ratios", "sex_ratios", "cross_country_fit", "education_gradient"}
    assert results["selectivity_ratios"].passed and results["sex_ratios"].passed
    assert not results["cross_country_fit"].blocking
    table = results_table(list(results.values()))
    assert table.columns == ["check", "passed", "blocking", "detail"]


def test_cross_country_slope():
    lo, hi = SLOPE_INTERVAL
    fit = fit_cross_country()
    assert lo <= fit.linear.slope <= hi
    assert not {"Guinea", "Mali", "Senegal"} & set(fit.countries)
    full = fit_cross_country(require_25plus=False)
    assert full.linear.slope == pytest.approx(-0.15, abs=0.01)
    assert full.linear.intercept == pytest.approx(2.71, abs=0.05)
    assert check_cross_country().passed
