import csv
import json
import math

import pytest
import yaml

from multilink import cli
from multilink.config import ConfigError, load_config, parse_config

RUN = {
    "seed": 7,
    "out": "out",
    "simulate": {"scenario": "high", "n": 30, "errors": 1},
    "estimate": {"loss": {"abstain": 0.2}},
    "gibbs": {"iterations": 120, "burn_in": 20},
}

STAGES = ("simulate", "compare", "sample", "estimate", "evaluate")


def _write(tmp_path, raw, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def _run_pipeline(cfg_path, out=None, seed=None):
    extra = (["--out", str(out)] if out else []) + (["--seed", str(seed)] if seed is not None else [])
    for stage in STAGES:
        assert cli.main([stage, "--config", str(cfg_path)] + extra) == 0, stage


def test_defaults_and_overrides(tmp_path):
    cfg = load_config(_write(tmp_path, RUN))
    assert cfg.out == tmp_path / "out"
    assert cfg.gibbs.iterations == 120 and cfg.gibbs.seed == 7
    assert cfg.estimate.loss.abstain == 0.2 and cfg.estimate.loss.partial
    assert math.isinf(parse_config({}).estimate.loss.abstain)


@pytest.mark.parametrize("raw,match", [
    ({"bogus": 1}, "unknown keys"),
    ({"gibbs": {"iterations": 10, "burn_in": 10}}, "gibbs"),
    ({"estimate": {"loss": {"fnm": -1}}}, "fnm must be positive"),
    ({"comparison": {"candidates": {"method": "magic"}}}, "magic"),
    ({"comparison": {"candidates": {"method": "disjunction", "rules": [{"nickname": 1}]}}}, "nickname"),
    ({"simulate": {"scenario": "huge"}}, "huge"),
    ({"simulate": {"errors": 40}}, "errors"),
    ({"likelihood": {"mu": 0}}, "positive"),
    ({"data": {"files": ["a.csv"], "duplicate_free": [True, False]}}, "one flag per file"),
])
def test_config_errors(raw, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(raw)


def test_missing_comparator_field_exits_1(tmp_path, capsys):
    path = _write(tmp_path, {"comparison": {"fields": [{"field": "nickname"}]}})
    assert cli.main(["compare", "--config", str(path)]) == 1
    assert "nickname" in capsys.readouterr().err


def test_missing_artifact_exits_2(tmp_path, capsys):
    path = _write(tmp_path, RUN)
    assert cli.main(["sample", "--config", str(path)]) == 2
    assert "compare" in capsys.readouterr().err
    assert cli.main(["compare", "--config", str(path)]) == 2


def test_bad_workers_exits_1(tmp_path):
    path = _write(tmp_path, RUN)
    assert cli.main(["replicate", "--config", str(path), "--workers", "0"]) == 1


def test_unreadable_config_exits_1(tmp_path):
    assert cli.main(["compare", "--config", str(tmp_path / "nope.yaml")]) == 1
    (tmp_path / "bad.yaml").write_text("seed: [1,\n")
    assert cli.main(["compare", "--config", str(tmp_path / "bad.yaml")]) == 1


def test_full_pipeline(tmp_path):
    path = _write(tmp_path, RUN)
    _run_pipeline(path)
    out = tmp_path / "out"
    for name in ("comparisons.npz", "comparisons.json", "samples.txt", "trace.txt", "estimate.csv",
                 "estimate_summary.json", "abstain_worklist.csv", "metrics.csv", "data/truth.csv"):
        assert (out / name).exists(), name
    meta = json.loads((out / "comparisons.json").read_text())
    assert meta["candidate_pairs"] == meta["universe_pairs"]
    summary = json.loads((out / "estimate_summary.json").read_text())
    assert len(summary["samples_sha256"]) == 64
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert len(rows) == 1 and 0.0 <= float(rows[0]["abstention"]) <= 1.0
    assert len((out / "samples.txt").read_text().splitlines()) == 100


def test_same_seed_byte_identical(tmp_path):
    path = _write(tmp_path, RUN)
    _run_pipeline(path, tmp_path / "a")
    _run_pipeline(path, tmp_path / "b")
    for name in ("data/file1.csv", "data/truth.csv", "comparisons.csv", "samples.txt", "trace.txt",
                 "estimate.csv", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    _run_pipeline(path, tmp_path / "c", seed=8)
    assert (tmp_path / "a/data/file1.csv").read_bytes() != (tmp_path / "c/data/file1.csv").read_bytes()


def test_replicate_report(tmp_path):
    raw = {"seed": 3, "out": "rep", "simulate": {"scenario": "low", "n": 25, "errors": [1, 3], "replicates": 2},
           "gibbs": {"iterations": 60, "burn_in": 10},
           "variants": [{"name": "structured"}, {"name": "flat", "prior": {"flat": True}}]}
    path = _write(tmp_path, raw)
    assert cli.main(["replicate", "--config", str(path), "--workers", "2"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "rep/replicates.csv")))
    assert len(rows) == 2 * 2 * 2
    report = list(csv.DictReader(open(tmp_path / "rep/report.csv")))
    assert {(r["variant"], r["errors"]) for r in report} == {(v, e) for v in ("structured", "flat") for e in "13"}
    assert all((tmp_path / "rep/figures" / f"{m}.png").exists() for m in ("precision", "recall", "abstention"))
    # worker count does not change results
    assert cli.main(["replicate", "--config", str(path), "--out", str(tmp_path / "one")]) == 0
    assert (tmp_path / "rep/replicates.csv").read_bytes() == (tmp_path / "one/replicates.csv").read_bytes()
