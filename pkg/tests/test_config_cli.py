import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner
from filelock import FileLock

from emoxplain.cli import EXIT_BACKEND, EXIT_BUSY, EXIT_CONFIG, EXIT_DATA, main
from emoxplain.classification.pipelines import ItemOutput
from emoxplain.config import ConfigError, ExperimentConfig, load_config
from emoxplain.evaluation import write_prediction_dump
from emoxplain.experiment import ExperimentBusyError, run_experiment
from emoxplain.labels import EMOTIONS

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "version": 1,
    "name": "small",
    "data": {"synthetic_items": 60, "synthetic_seed": 2},
    "classifier": {"epochs": 30, "n_features": 8192},
    "pipelines": [{"name": "cee"}, {"name": "cee_chat", "prompt": {"mode": "zero_shot"}}],
}


def write_cfg(tmp_path, d=SMALL, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d), encoding="utf-8")
    return p


def test_shipped_toy_config_loads():
    cfg = load_config(ROOT / "configs" / "toy.yaml")
    assert cfg.runs == 3 and cfg.seeds() == [0, 1, 2]
    assert [p.name for p in cfg.pipelines][:2] == ["headline", "cee"]
    assert cfg.pipeline_spec(cfg.pipelines[4]).aggregation == "majority_vote"
    s2s = load_config(ROOT / "configs" / "toy_seq2seq.yaml")
    assert s2s.pipeline_spec(s2s.pipelines[1]).generator.kind == "local_seq2seq"
    assert s2s.transfer_config().stage1.epochs == 10


def test_config_hash_ignores_output_location(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    assert cfg.config_hash() == cfg.with_overrides(out_dir=str(tmp_path)).config_hash()
    assert cfg.config_hash() != cfg.with_overrides(seed=5).config_hash()
    assert load_config(write_cfg(tmp_path)).config_hash() == cfg.config_hash()
    j = tmp_path / "cfg.json"
    j.write_text(json.dumps(SMALL))
    assert load_config(j).config_hash() == cfg.config_hash()


@pytest.mark.parametrize("patch", [
    {"version": 2},
    {"runs": 0},
    {"pipelines": []},
    {"pipelines": [{"name": "nope"}]},
    {"unknown_key": 1},
    {"data": {"synthetic_items": 10, "annotations": "x.jsonl"}},
    {"classifier": {"epochs": 0}},
    {"generator": {"kind": "telepathy"}},
    {"pipelines": [{"name": "ee_chat", "aggregation": "none"}]},
])
def test_invalid_configs_rejected(patch):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, **patch})


def test_backend_override():
    d = {**SMALL, "pipelines": SMALL["pipelines"] + [{"name": "cee_t"}]}
    cfg = ExperimentConfig.from_dict(d)
    assert cfg.pipeline_spec(cfg.pipelines[2]).generator.kind == "mock"
    live = cfg.with_overrides(backend="llm_service")
    assert live.pipeline_spec(live.pipelines[1]).generator.kind == "llm_service"
    assert live.pipeline_spec(live.pipelines[2]).generator.kind == "local_seq2seq"


def test_runs_produce_one_seed_each(tmp_path):
    cfg = ExperimentConfig.from_dict({**SMALL, "pipelines": [{"name": "cee"}], "runs": 30, "seed": 100})
    res = run_experiment(cfg, tmp_path / "out")
    rep = res.report("cee")
    assert rep.runs == 30 and rep.seeds == list(range(100, 130))
    assert len(rep.per_run) == 30
    assert len(list((tmp_path / "out" / "predictions").glob("cee__-__seed*.jsonl"))) == 30


def test_busy_output_dir_is_refused(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    with FileLock(str(out / ".emoxplain.lock")):
        with pytest.raises(ExperimentBusyError):
            run_experiment(ExperimentConfig.from_dict(SMALL), out)
        r = CliRunner().invoke(main, ["run", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
        assert r.exit_code == EXIT_BUSY


def test_cli_run_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    runner = CliRunner()
    outs = []
    for k in range(2):
        r = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / f"o{k}"), "--runs", "2"])
        assert r.exit_code == 0, r.output
        assert "cee_chat" in r.output
        outs.append(tmp_path / f"o{k}")
    for name in ("reports.jsonl", "summary.txt", "confusion/cee_chat__zero_shot.csv",
                 "predictions/cee_chat__zero_shot__seed1.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = [json.loads(line) for line in (outs[0] / "reports.jsonl").read_text().splitlines()]
    assert {r["pipeline"] for r in rows} == {"cee", "cee_chat"}
    assert all(r["config_hash"] == rows[0]["config_hash"] for r in rows)


def test_cli_synth_ingest_and_malformed_line(tmp_path):
    runner = CliRunner()
    data = tmp_path / "ann.jsonl"
    r = runner.invoke(main, ["synth", "--items", "40", "--seed", "1", "--out", str(data)])
    assert r.exit_code == 0
    r = runner.invoke(main, ["ingest", str(data), "--out", str(tmp_path / "store")])
    assert r.exit_code == 0, r.output
    assert "40 items, 400 annotations" in r.output
    assert (tmp_path / "store").is_dir()
    lines = data.read_text().splitlines()
    lines[6] = "{not json"
    data.write_text("\n".join(lines) + "\n")
    r = runner.invoke(main, ["ingest", str(data), "--out", str(tmp_path / "store2")])
    assert r.exit_code == EXIT_DATA
    assert "line 7" in r.output


def test_cli_config_error_exit_code(tmp_path):
    bad = write_cfg(tmp_path, {**SMALL, "runs": 0})
    r = CliRunner().invoke(main, ["run", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert r.exit_code == EXIT_CONFIG
    assert "runs" in r.output


def test_cli_missing_credential_names_env_var(tmp_path, monkeypatch):
    monkeypatch.delenv("EMOXPLAIN_LLM_API_KEY", raising=False)
    cfg = write_cfg(tmp_path)
    r = CliRunner().invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / "o"),
                                  "--backend", "llm_service"])
    assert r.exit_code == EXIT_BACKEND
    assert "EMOXPLAIN_LLM_API_KEY" in r.output


def _dump(path, correct):
    outs = [ItemOutput(f"n{i}", EMOTIONS[0], EMOTIONS[0] if ok else EMOTIONS[1], (EMOTIONS[0], EMOTIONS[1]))
            for i, ok in enumerate(correct)]
    write_prediction_dump(path, "x", outs, {"seed": 0})
    return str(path)


def test_cli_compare(tmp_path):
    runner = CliRunner()
    a = _dump(tmp_path / "a.jsonl", [True] * 10 + [False] * 5)
    same = runner.invoke(main, ["compare", a, a, "--json"])
    assert same.exit_code == 0
    d = json.loads(same.output)
    assert d["p_value"] == 1.0 and d["degenerate"] and d["b"] == d["c"] == 0
    b = _dump(tmp_path / "b.jsonl", [False] * 10 + [False] * 5)
    r = runner.invoke(main, ["compare", b, a, "--json"])
    d = json.loads(r.output)
    assert (d["b"], d["c"], d["method"]) == (0, 10, "exact")
    assert abs(d["p_value"] - 0.001953125) < 1e-9
    text = runner.invoke(main, ["compare", b, a])
    assert "p-value: 0.001953125" in text.output
    short = _dump(tmp_path / "c.jsonl", [True] * 3)
    assert runner.invoke(main, ["compare", a, short]).exit_code == EXIT_DATA
