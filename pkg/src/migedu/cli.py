"""Command-line front end: one indicator per invocation, emitted as CSV or JSON.

Exit codes: 0 success, 1 usage error, 2 data or schema validation failure,
3 insufficient data for the requested indicator, 4 fixture check failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import __version__
from .engine import WORKERS_ENV
from .errors import DataValidationError, FixtureCheckError, InsufficientDataError, SchemaError
from .microdata import MicrodataFile, RecordFilter, load_hierarchy, load_schema
from .microdata.codes import Education, Reason, Scale, SettlementFlow
from .tables import Table

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INSUFFICIENT, EXIT_FIXTURE = range(5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_ages(text: str) -> RecordFilter:
    """'all', '15+', '20-24' or a single age."""
    t = text.strip()
    try:
        if t == "all":
            return RecordFilter()
        if t.endswith("+"):
            return RecordFilter(min_age=int(t[:-1]))
        if "-" in t:
            lo, hi = (int(v) for v in t.split("-", 1))
            if lo > hi:
                raise ValueError
            return RecordFilter(min_age=lo, max_age=hi)
        return RecordFilter(min_age=int(t), max_age=int(t))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad age range {text!r}") from None


def _age_bounds(f: RecordFilter, default=(5, 65)) -> tuple[int, int]:
    return (default[0] if f.min_age is None else f.min_age, default[1] if f.max_age is None else f.max_age)


def _enum(cls):
    def conv(text):
        try:
            return cls.parse(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(cls.labels())}") from None
    conv.__name__ = cls.__name__
    return conv


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _observed(text):
    try:
        n, c = text.split(":")
        return float(n), float(c)
    except ValueError:
        raise argparse.ArgumentTypeError("expected N_REGIONS:CMI") from None


# -- data loading ---------------------------------------------------------


def _sibling(data: Path, suffix: str) -> Path | None:
    p = data.with_name(data.stem + suffix)
    return p if p.exists() else None


def open_data(args) -> MicrodataFile:
    if args.data is None:
        raise UsageError("a data file is required")
    data = Path(args.data)
    if not data.exists():
        raise UsageError(f"no such data file: {data}")
    schema = Path(args.schema) if args.schema else _sibling(data, "_schema.json")
    hierarchy = Path(args.hierarchy) if args.hierarchy else _sibling(data, "_hierarchy.csv")
    for label, p in (("schema", schema), ("hierarchy", hierarchy)):
        if p is None:
            raise UsageError(f"--{label} is required (no sibling file next to {data.name})")
        if not p.exists():
            raise UsageError(f"no such {label} file: {p}")
    return MicrodataFile(data, load_schema(schema), load_hierarchy(hierarchy), workers=args.workers)


def _opts(args) -> dict:
    return dict(include_unknown_in_par=args.include_unknown_in_par, weighted=not args.unweighted,
                workers=args.workers)


# -- subcommands ----------------------------------------------------------


def cmd_ingest_check(args) -> Table:
    src = open_data(args)
    for _ in src.batches():
        pass
    rep = src.report
    rows = [["rows_read", "", rep.rows_read], ["rows_accepted", "", rep.rows_accepted],
            ["rows_rejected", "", rep.rows_rejected]]
    rows += [["rejected", reason, n] for reason, n in sorted(rep.rejected.items())]
    table = Table(["item", "reason", "count"], rows, {"file": str(src.path)})
    if args.strict and rep.rows_rejected:
        _emit(table, args)
        raise DataValidationError(f"{rep.rows_rejected} rows rejected")
    return table


def cmd_cmi(args) -> Table:
    from .intensity import cmi, cmi_by_education

    src = open_data(args)
    if args.by == "education":
        filt = args.ages if args.ages is not None else parse_ages("15+")
        return cmi_by_education(src, args.scale, filt, **_opts(args)).to_table()
    return cmi(src, args.scale, args.ages or RecordFilter(), **_opts(args)).to_table()


def cmd_acmi(args) -> Table:
    from .intensity import acmi_estimate, observed_scales

    observed = list(args.observed or [])
    if args.data is not None:
        observed += observed_scales(open_data(args), args.ages or RecordFilter(), **_opts(args))
    if not observed:
        raise UsageError("give a data file or at least one --observed N:CMI")
    return acmi_estimate(observed, args.addresses).to_table()


def cmd_age_profile(args) -> Table:
    from .age_profile import normalize, schedule, smooth_profile
    from .intensity import asmi

    src = open_data(args)
    lo, hi = _age_bounds(args.ages or RecordFilter())
    raw = asmi(src, args.scale, (lo, hi), reason=args.reason, **_opts(args))
    if args.raw:
        return raw.to_table()
    if args.peak:
        _, pk = schedule(raw, args.bandwidth)
        return pk.to_table()
    return normalize(smooth_profile(raw, args.bandwidth)).to_table()


def cmd_flows(args) -> Table:
    from .flows import composition_by_education_age, flow_matrix, secondary_plus_share_by_flow, settlement_shares

    src = open_data(args)
    w = dict(weighted=not args.unweighted, workers=args.workers)
    filt = args.ages or RecordFilter()
    if args.settlement:
        return settlement_shares(src, args.scale, filter=filt, **w).to_table()
    if args.secondary_plus:
        return secondary_plus_share_by_flow(src, args.scale, filter=filt, **w).to_table()
    if args.composition:
        return composition_by_education_age(src, args.scale, **w).to_table()
    return flow_matrix(src, args.scale, args.strat, filter=filt, **w).to_table()


def cmd_reasons(args) -> Table:
    from .flows import reason_age_profile, reason_sex_ratio, reason_shares

    src = open_data(args)
    w = dict(weighted=not args.unweighted, workers=args.workers)
    if args.profile is not None:
        return reason_age_profile(src, args.profile, args.scale, args.bandwidth, **w).to_table()
    ages = _age_bounds(args.ages or parse_ages("15-24"))
    table = reason_shares(src, args.scale, ages, by_sex=args.by_sex or args.sex_ratio, **w)
    if args.sex_ratio:
        return reason_sex_ratio(table).to_table()
    return table.to_table()


def cmd_selectivity(args) -> Table:
    from .selectivity import mys_by_status, selectivity_ratios

    if args.cross_country:
        from .fixtures import fit_cross_country

        return fit_cross_country(args.series, require_25plus=not args.all_countries).to_table()
    src = open_data(args)
    table = mys_by_status(src, args.age_group, weighted=not args.unweighted, workers=args.workers)
    return selectivity_ratios(table).to_table() if args.ratios else table.to_table()


def cmd_duration(args) -> Table:
    from .selectivity import attainment_by_duration, mys_by_duration

    src = open_data(args)
    w = dict(weighted=not args.unweighted, workers=args.workers)
    if args.mys:
        return mys_by_duration(src, args.scale, **w).to_table()
    return attainment_by_duration(src, args.flow, args.scale, **w).to_table()


def cmd_redistribution(args) -> Table:
    from .redistribution import density_slope, density_slopes_by_education, nmr_by_region

    src = open_data(args)
    if args.slopes:
        slopes = density_slopes_by_education(src, args.scale, log_base=args.log_base, weighting=args.weighting,
                                              **_opts(args))
        tables = [s.to_table() for s in slopes]
        return Table(tables[0].columns, [t.rows[0] for t in tables], tables[0].meta)
    table = nmr_by_region(src, args.scale, args.education, **_opts(args))
    if args.slope:
        return density_slope(table, log_base=args.log_base).to_table()
    return table.to_table()


def cmd_synth(args) -> Table:
    from .synth import SynthConfig, generate

    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise UsageError(f"no such config file: {p}")
        config = SynthConfig.loads(p.read_text())
    else:
        config = SynthConfig()
    if args.records is not None:
        config.n_records = args.records
    config.validate()
    out = generate(config, args.seed, args.out, args.stem)
    rows = [["data", str(out.data)], ["hierarchy", str(out.hierarchy)], ["schema", str(out.schema)],
            ["ledger", str(out.ledger)]]
    return Table(["artifact", "path"], rows, {"seed": args.seed, "records": config.n_records})


def cmd_verify_fixtures(args) -> Table:
    from .fixtures import results_table, verify_fixtures

    results = verify_fixtures()
    table = results_table(results)
    failed = [r.name for r in results if r.blocking and not r.passed]
    if failed:
        _emit(table, args)
        raise FixtureCheckError(f"fixture checks failed: {', '.join(failed)}")
    return table


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", "-o", help="write here instead of standard output")

    data = _Parser(add_help=False)
    data.add_argument("data", nargs="?", help="delimited microdata file")
    data.add_argument("--schema", help="schema JSON (default: <data>_schema.json)")
    data.add_argument("--hierarchy", help="region hierarchy CSV (default: <data>_hierarchy.csv)")
    data.add_argument("--workers", type=int, default=None,
                      help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    data.add_argument("--scale", type=Scale.coerce, default=Scale.major, help="major or minor")
    data.add_argument("--ages", type=parse_ages, default=None, help="all, 15+, 20-24 or a single age")
    data.add_argument("--include-unknown-in-par", action="store_true",
                      help="count records with an unclassifiable previous residence in the PAR")
    data.add_argument("--unweighted", action="store_true", help="ignore person weights")

    p = _Parser(prog="migedu", description="Internal migration and education indicators from census microdata.",
                epilog="Table layouts are described in docs/formats.md.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help, parents=(common, data)):
        sp = sub.add_parser(name, parents=list(parents), help=help, description=help)
        sp.set_defaults(func=fn)
        return sp

    sp = add("ingest-check", cmd_ingest_check, "validate a file and count rejected rows by reason")
    sp.add_argument("--strict", action="store_true", help="exit 2 if any row is rejected")

    sp = add("cmi", cmd_cmi, "crude migration intensity (columns: [education,] migrants, par, value)")
    sp.add_argument("--by", choices=("education",), help="one row per education level plus Total (ages 15+)")

    sp = add("acmi", cmd_acmi, "aggregate crude migration intensity via Courgeau's k")
    sp.add_argument("--addresses", type=_positive_float, default=1e6, help="number of address units")
    sp.add_argument("--observed", type=_observed, action="append", metavar="N:CMI",
                    help="extra (region count, CMI) observation; repeatable")

    sp = add("age-profile", cmd_age_profile, "age-specific intensities, smoothed and normalised")
    sp.add_argument("--bandwidth", type=_positive_float, default=2.0)
    sp.add_argument("--raw", action="store_true", help="unsmoothed single-year proportions")
    sp.add_argument("--peak", action="store_true", help="age and intensity at the peak")
    sp.add_argument("--reason", type=_enum(Reason), help="restrict migrants to one reason")

    sp = add("flows", cmd_flows, "origin-destination counts and settlement-flow tables")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--settlement", action="store_true", help="shares of RR, RU, UR, UU per education level")
    g.add_argument("--secondary-plus", action="store_true", help="percent with secondary+ per flow type")
    g.add_argument("--composition", action="store_true", help="education shares of migrants per age group")
    sp.add_argument("--strat", choices=("education", "age_group", "sex"), help="stratify the OD matrix")

    sp = add("reasons", cmd_reasons, "reasons for moving (default ages 15-24)")
    sp.add_argument("--by-sex", action="store_true")
    sp.add_argument("--sex-ratio", action="store_true", help="men's share over women's share per reason")
    sp.add_argument("--profile", type=_enum(Reason), metavar="REASON", help="smoothed age profile of one reason")
    sp.add_argument("--bandwidth", type=_positive_float, default=2.0)

    sp = add("selectivity", cmd_selectivity, "schooling of urban in-migrants against stayers")
    sp.add_argument("--age-group", choices=("15+", "20-24"), default="15+")
    sp.add_argument("--ratios", action="store_true", help="ratios to urban and rural stayers")
    sp.add_argument("--cross-country", action="store_true", help="fit over the shipped country tables")
    sp.add_argument("--series", choices=("15+", "25+"), default="15+", help="national schooling series")
    sp.add_argument("--all-countries", action="store_true",
                    help="keep countries lacking the 25+ national figure")

    sp = add("duration", cmd_duration, "education of migrants by duration of residence")
    sp.add_argument("--flow", type=_enum(SettlementFlow), default=SettlementFlow.RU)
    sp.add_argument("--mys", action="store_true", help="mean years of schooling per duration and flow")

    sp = add("redistribution", cmd_redistribution, "net migration rates and density slopes")
    sp.add_argument("--education", type=_enum(Education), help="restrict to one level, ages 15+")
    sp.add_argument("--slope", action="store_true", help="regress NMR on log density")
    sp.add_argument("--slopes", action="store_true", help="slopes overall and per education level")
    sp.add_argument("--log-base", type=_positive_float, default=math.e)
    sp.add_argument("--weighting", choices=("par", "total"), default="par",
                    help="weights of stratified fits: stratum PAR or total 15+ PAR")

    sp = add("synth", cmd_synth, "write a synthetic census with its ground-truth ledger", parents=(common,))
    sp.add_argument("--config", help="SynthConfig JSON")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--records", type=int)
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--stem", default="synth")

    add("verify-fixtures", cmd_verify_fixtures, "cross-check the shipped published tables", parents=(common,))
    return p


def _emit(table: Table, args) -> None:
    text = table.render(args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _emit(args.func(args), args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"migedu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, DataValidationError) as exc:
        print(f"migedu: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InsufficientDataError, ValueError) as exc:
        print(f"migedu: cannot compute: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except FixtureCheckError as exc:
        print(f"migedu: {exc}", file=sys.stderr)
        return EXIT_FIXTURE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
