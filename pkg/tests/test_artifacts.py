import json

import pytest

from w2svqa.artifacts import digest, make_header, read_jsonl, read_jsonl_header, strip_timestamp, write_json, write_jsonl
from w2svqa.config import load_config, parse_config
from w2svqa.errors import ConfigError


def test_digest_stable_and_order_free():
    assert digest({"a": 1, "b": [1, 2]}) == digest({"b": [1, 2], "a": 1})
    assert digest({"a": 1}) != digest({"a": 2})
    assert len(digest({})) == 16


def test_jsonl_header_isolated(tmp_path):
    h = make_header("abc", 3)
    write_jsonl(tmp_path / "x.jsonl", [{"k": 1}, {"k": 2}], h)
    assert read_jsonl(tmp_path / "x.jsonl") == [{"k": 1}, {"k": 2}]
    assert read_jsonl_header(tmp_path / "x.jsonl") == h
    assert set(h) == {"config_digest", "seed", "timestamp"}


def test_json_strip_timestamp(tmp_path):
    write_json(tmp_path / "a.json", {"v": 1}, make_header("d", 0, "2020-01-01T00:00:00+00:00"))
    write_json(tmp_path / "b.json", {"v": 1}, make_header("d", 0, "2021-01-01T00:00:00+00:00"))
    a, b = (json.loads((tmp_path / n).read_text()) for n in ("a.json", "b.json"))
    assert a != b and strip_timestamp(a) == strip_timestamp(b)


def test_parse_config_defaults_and_overrides(tmp_path):
    cfg = parse_config({"seed": 4, "train": {"epochs": 3}, "stages": [{"stage": 1}, {"stage": 2, "carryover": 0.5}]})
    assert cfg.w2s.seed == 4 and cfg.w2s.train.epochs == 3
    assert [s.carryover for s in cfg.w2s.stages] == [0.2, 0.5]


@pytest.mark.parametrize("data,needle", [
    ({"sed": 1}, "valid keys"),
    ({"train": {"epoch": 3}}, "epochs"),
    ({"stages": [{"stage": 2}]}, "numbered"),
    ({"teachers": [{"name": "t", "weights": {"sharpness": 1}}]}, "unknown metrics"),
    ({"paths": {"corpus_root": "/definitely/not/here"}}, "does not exist"),
    ({"paths": {"outdir": "x"}}, "valid keys"),
])
def test_config_errors_list_valid_keys(data, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(data)


def test_load_toml_and_json(tmp_path):
    (tmp_path / "c.toml").write_text('seed = 2\n[corpus]\nn_sources = 10\n[[teachers]]\nname = "a"\n'
                                     'weights = { blur = 1.0 }\n')
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.w2s.corpus.n_sources == 10 and cfg.w2s.teachers[0].weights == (("blur", 1.0),)
    (tmp_path / "c.json").write_text(json.dumps({"seed": 2, "paths": {"output_dir": "out"}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.paths["output_dir"] == str((tmp_path / "out").resolve())
    (tmp_path / "bad.toml").write_text("seed = = 1")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")
