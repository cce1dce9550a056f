"""Published country tables shipped as CSV, and consistency checks among them.

The census microdata behind the published figures cannot be redistributed,
so the checks here only exploit internal consistency: ratios recomputed
from published means are compared with the published ratios.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .intensity import education_ratios, mean_ratios
from .microdata.codes import Education, MigrantStatus
from .selectivity import LOW_SCHOOLING_OUTLIERS, CrossCountryFit, MysTable, cross_country_fit, selectivity_ratios
from .flows import sex_ratio
from .tables import Table

FILES = {
    "mys_15plus": "mys_by_status_15plus.csv",
    "mys_20_24": "mys_by_status_20_24.csv",
    "national": "national_indicators.csv",
    "selectivity": "published_selectivity_ratios.csv",
    "sex_shares": "education_move_shares.csv",
    "cmi_education": "cmi_by_education.csv",
}

# The selectivity tables spell one country differently from the others.
ALIASES = {"Columbia": "Colombia"}

RATIO_TOLERANCE = 0.05
MEAN_TOLERANCE = 0.02
PUBLISHED_MEANS = (0.99, 1.75, 1.11, 2.11)
SEX_RATIO_TOLERANCE = 0.2
SLOPE_INTERVAL = (-0.20, -0.10)

_STATUS_COLUMNS = {
    MigrantStatus.UrbanInMigrant: "urban_in_migrant",
    MigrantStatus.RuralInMigrant: "rural_in_migrant",
    MigrantStatus.UrbanStayer: "urban_stayer",
    MigrantStatus.RuralStayer: "rural_stayer",
}
_LEVEL_COLUMNS = {
    Education.LtPrimary: "lt_primary",
    Education.Primary: "primary",
    Education.Secondary: "secondary",
    Education.Tertiary: "tertiary",
}


def _num(text: str) -> float | None:
    return float(text) if text.strip() else None


def read_rows(name: str) -> list[dict[str, str]]:
    """Rows of a shipped fixture, by short name (see ``FILES``) or file name."""
    fname = FILES.get(name, name)
    text = resources.files("migedu").joinpath("data", fname).read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def canonical(country: str) -> str:
    return ALIASES.get(country, country)


def mys_tables(ages: str = "15+") -> dict[str, MysTable]:
    rows = read_rows("mys_15plus" if ages == "15+" else "mys_20_24")
    return {
        canonical(r["country"]): MysTable.from_means({s: _num(r[c]) for s, c in _STATUS_COLUMNS.items()}, ages)
        for r in rows
    }


def national_mys_15plus() -> dict[str, float]:
    """Mean years of schooling of the whole 15+ population, from the status table."""
    return {canonical(r["country"]): float(r["total"]) for r in read_rows("mys_15plus")}


def national_mys_25plus() -> dict[str, float | None]:
    return {r["country"]: _num(r["mean_years_schooling_25plus"]) for r in read_rows("national")}


def published_selectivity() -> tuple[dict[str, tuple[float, ...]], tuple[float, ...]]:
    """Published ratios per country, and the published column means."""
    rows, means = {}, None
    for r in read_rows("selectivity"):
        vals = tuple(float(v) for k, v in r.items() if k.startswith("to_"))
        if r["country"] == "Mean":
            means = vals
        else:
            rows[canonical(r["country"])] = vals
    return rows, means


def published_cmi_by_education(scale: str = "major") -> dict[str, dict[str, float | None]]:
    out = {}
    for r in read_rows("cmi_education"):
        if r["scale"] == scale:
            out[r["country"]] = {"Total": _num(r["total"]),
                                 **{lvl.label: _num(r[c]) for lvl, c in _LEVEL_COLUMNS.items()}}
    return out


# -- checks ---------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    rows: list[list] = field(default_factory=list)
    blocking: bool = True


def recomputed_selectivity() -> dict[str, tuple[float, float, float, float]]:
    """(20-24 urban, 20-24 rural, 15+ urban, 15+ rural) ratios from the status means."""
    young, adult = mys_tables("20-24"), mys_tables("15+")
    out = {}
    for country in adult:
        a, b = selectivity_ratios(young[country]), selectivity_ratios(adult[country])
        out[country] = (a.ratio_to_urban_stayers, a.ratio_to_rural_stayers,
                        b.ratio_to_urban_stayers, b.ratio_to_rural_stayers)
    return out


def check_selectivity_table() -> CheckResult:
    published, pub_means = published_selectivity()
    ours = recomputed_selectivity()
    rows, worst = [], 0.0
    missing = sorted(set(published) ^ set(ours))
    for country, pub in published.items():
        if country not in ours:
            continue
        got = ours[country]
        gap = max(abs(g - p) for g, p in zip(got, pub))
        worst = max(worst, gap)
        rows.append([country, *got, *pub, gap])
    means = tuple(float(np.mean([v[i] for v in ours.values()])) for i in range(4))
    mean_gap = max(abs(m - p) for m, p in zip(means, PUBLISHED_MEANS))
    ok = not missing and worst <= RATIO_TOLERANCE and mean_gap <= MEAN_TOLERANCE
    if pub_means is not None and tuple(pub_means) != PUBLISHED_MEANS:
        ok = False
    detail = (f"{len(rows)} countries, max ratio gap {worst:.4f} (tol {RATIO_TOLERANCE}); "
              f"column means {', '.join(f'{m:.4f}' for m in means)}, max gap {mean_gap:.4f} (tol {MEAN_TOLERANCE})")
    if missing:
        detail += f"; unmatched countries {missing}"
    return CheckResult("selectivity_ratios", ok, detail, rows)


def check_sex_ratios() -> CheckResult:
    rows, worst = [], 0.0
    for r in read_rows("sex_shares"):
        got = sex_ratio(float(r["men_share"]), float(r["women_share"]))
        pub = float(r["published_ratio"])
        gap = abs(got - pub)
        worst = max(worst, gap)
        rows.append([r["scale"], r["country"], got, pub, gap])
    ok = worst <= SEX_RATIO_TOLERANCE
    return CheckResult("sex_ratios", ok, f"{len(rows)} rows, max gap {worst:.4f} (tol {SEX_RATIO_TOLERANCE})", rows)


def cross_country_points(series: str = "15+") -> dict[str, tuple[float | None, float]]:
    """National schooling against the 15+ ratio to rural stayers, per country.

    ``series`` picks the x coordinate: "15+" is the all-population mean from
    the status table, "25+" the national figure, which is missing for some
    countries.
    """
    national = national_mys_15plus() if series == "15+" else national_mys_25plus()
    return {c: (national.get(c), r[3]) for c, r in recomputed_selectivity().items()}


def fit_cross_country(series: str = "15+", require_25plus: bool = True) -> CrossCountryFit:
    points = cross_country_points(series)
    if require_25plus:
        known = {c for c, v in national_mys_25plus().items() if v is not None}
        points = {c: (x if c in known else None, y) for c, (x, y) in points.items()}
    return cross_country_fit(points, LOW_SCHOOLING_OUTLIERS)


def check_cross_country() -> CheckResult:
    lo, hi = SLOPE_INTERVAL
    main = fit_cross_country("15+", require_25plus=True)
    full = fit_cross_country("15+", require_25plus=False)
    alt = fit_cross_country("25+")
    rows = []
    for label, f in (("15+ series, 25+ coverage", main), ("15+ series, all", full), ("25+ series", alt)):
        rows.append([label, len(f.countries), f.linear.slope, f.linear.intercept, f.linear.r_squared,
                     f.power.exponent, ",".join(f.dropped_missing)])
    s = main.linear.slope
    detail = (f"slope {s:.4f} on {len(main.countries)} countries (interval [{lo}, {hi}]); "
              f"all countries {full.linear.slope:.4f}, r2 {full.linear.r_squared:.3f}; "
              f"25+ series {alt.linear.slope:.4f}")
    return CheckResult("cross_country_fit", lo <= s <= hi, detail, rows, blocking=False)


def check_education_gradient() -> CheckResult:
    """Mean ratios of each level's CMI to LtPrimary, major regions."""
    ratios = []
    for country, row in published_cmi_by_education("major").items():
        if any(row[l.label] is None for l in _LEVEL_COLUMNS) or not row["LtPrimary"]:
            continue
        ratios.append(education_ratios({l: row[l.label] for l in _LEVEL_COLUMNS}))
    m = mean_ratios(ratios)
    vals = list(m[1:])
    target = (1.8, 2.8, 3.8)
    ok = all(abs(v - t) <= 0.05 for v, t in zip(vals, target))
    detail = f"{len(ratios)} countries, mean ratios {', '.join(f'{v:.3f}' for v in vals)} vs {target}"
    rows = [[n, v] for n, v in zip(("Primary", "Secondary", "Tertiary"), vals)]
    return CheckResult("education_gradient", ok, detail, rows, blocking=False)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "selectivity_ratios": check_selectivity_table,
    "sex_ratios": check_sex_ratios,
    "cross_country_fit": check_cross_country,
    "education_gradient": check_education_gradient,
}


def verify_fixtures(names=None) -> list[CheckResult]:
    return [CHECKS[n]() for n in (names or CHECKS)]


def results_table(results: list[CheckResult]) -> Table:
    return Table(["check", "passed", "blocking", "detail"],
                 [[r.name, r.passed, r.blocking, r.detail] for r in results])
