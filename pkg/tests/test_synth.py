import json

import numpy as np
import pytest

from migedu.errors import SchemaError
from migedu.intensity import cmi
from migedu.microdata import MicrodataFile, load_hierarchy, load_schema
from migedu.synth import Band, GroundTruth, RegionSpec, SynthConfig, age_factor, generate, generate_batch

from conftest import rel_close


def test_zero_move_probability():
    batch, truth = generate_batch(SynthConfig(n_records=5_000, inter_rate=0.0, intra_rate=0.0), seed=1)
    assert cmi(batch).value == 0.0 and cmi(batch, "minor").value == 0.0
    assert truth.migrants("major") == 0.0


def test_file_output_is_deterministic(tmp_path):
    cfg = SynthConfig(n_records=3_000, corrupt_fraction=0.02, shard_size=1_000)
    a = generate(cfg, 9, tmp_path / "a", "s")
    b = generate(cfg, 9, tmp_path / "b", "s")
    for pa, pb in zip((a.data, a.hierarchy, a.schema, a.ledger), (b.data, b.hierarchy, b.schema, b.ledger)):
        assert pa.read_bytes() == pb.read_bytes()
    c = generate(cfg, 10, tmp_path / "c", "s")
    assert c.data.read_bytes() != a.data.read_bytes()


def test_file_and_batch_agree(tmp_path):
    cfg = SynthConfig(n_records=4_000, weights={"kind": "uniform", "low": 0.5, "high": 2.0}, shard_size=1_500)
    out = generate(cfg, 2, tmp_path, "s")
    batch, truth = generate_batch(cfg, 2)
    assert out.truth.doc == truth.doc
    f = MicrodataFile(out.data, load_schema(out.schema), load_hierarchy(out.hierarchy))
    for scale in ("major", "minor"):
        a, b = cmi(f, scale), cmi(batch, scale)
        assert rel_close(a.migrants, b.migrants) and rel_close(a.par, b.par)
    assert GroundTruth.load(out.ledger).doc == json.loads(out.ledger.read_text())


def test_ledger_balances(corpus):
    _, truth = corpus
    for scale in ("major", "minor"):
        reg = truth["regions"][scale]
        assert sum(reg["inflow"]) == pytest.approx(sum(reg["outflow"]), rel=1e-12)
        od = truth["od"][scale]
        assert sum(v for _, _, v in od) == pytest.approx(sum(reg["inflow"]), rel=1e-12)
        assert all(o != d for o, d, _ in od)


def test_ledger_metadata(corpus):
    _, truth = corpus
    assert truth["seed"] == 11 and "PCG64" in truth["algorithm"]
    assert truth["n_records"] == 60_000 and truth["valid_records"] == 60_000


def test_shard_size_changes_nothing_but_streams():
    # Shards draw from independent streams, so totals differ but stay plausible.
    a, ta = generate_batch(SynthConfig(n_records=20_000, shard_size=20_000), 3)
    b, tb = generate_batch(SynthConfig(n_records=20_000, shard_size=5_000), 3)
    assert len(a) == len(b) == 20_000
    assert abs(ta.cmi() - tb.cmi()) < 1.5


def test_minor_cmi_not_below_major(corpus):
    _, truth = corpus
    assert truth.cmi("minor") >= truth.cmi("major")


def test_age_factor_kinds():
    assert np.all(age_factor({"kind": "flat"}) == 1.0)
    g = age_factor({"kind": "gaussian", "peak": 22, "sd": 4})
    assert g.max() == 1.0 and np.argmax(g) == 22 - 5
    m = age_factor({"kind": "mixture", "childhood": [0.02, 0.1], "labour": [0.06, 20, 0.1, 0.4], "level": 0.003})
    assert 15 <= 5 + int(np.argmax(m)) <= 30
    with pytest.raises(SchemaError):
        age_factor({"kind": "table", "values": [1.0, 2.0]})
    with pytest.raises(SchemaError):
        age_factor({"kind": "weird"})


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"inter_rate": 0.6, "intra_rate": 0.6}, "exceed 1"),
        ({"education_bands": [Band(5, 40, [0.25] * 4)]}, "cover"),
        ({"education_bands": [Band(5, 65, [0.5, 0.5, 0.5, 0.5])]}, "sum to 1"),
        ({"settlement_mix": [0.5, 0.5, 0.5]}, "expected 4"),
        ({"settlement_mix_by_education": {"LtPrimary": [0.25] * 4}}, "lacks"),
        ({"regions": [RegionSpec("R0", "M0")], "intra_rate": 0.0}, "two major"),
        ({"weights": {"kind": "lognormal"}}, "weights kind"),
        ({"female_prob": 1.5}, r"\[0, 1\]"),
        ({"education_multipliers": [1.0, 2.0]}, "four"),
    ],
)
def test_config_validation(changes, message):
    with pytest.raises(SchemaError, match=message):
        SynthConfig(**changes).validate()


def test_config_round_trip():
    cfg = SynthConfig(n_records=123, education_multipliers=[1, 2, 3, 4],
                      age_schedule={"kind": "gaussian", "peak": 24, "sd": 6}, duration_topcode=4)
    again = SynthConfig.loads(cfg.dumps())
    assert again == cfg
    with pytest.raises(SchemaError, match="unknown"):
        SynthConfig.from_dict({"n_records": 1, "colour": "red"})
    with pytest.raises(SchemaError, match="malformed"):
        SynthConfig.loads("{")
