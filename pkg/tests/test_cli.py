from __future__ import annotations

import csv

import pytest

from symbolic_xrl.cli import RunConfig, load_config, main

SMALL = """
[env]
horizon = 120
seed = 4

[agent]
train_horizon = 30

[run]
seeds = 3
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "c.ini").write_text(SMALL)
    assert main(["train", "--config", str(d / "c.ini"), "--checkpoints", "2,4", "--episodes", "4",
                 "--out", str(d / "train")]) == 0
    return d


def rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_config_round_trip():
    cfg = RunConfig.from_ini(SMALL)
    assert cfg.env.horizon == 120 and cfg.agent.train_horizon == 30 and cfg.run.seeds == 3
    text = cfg.to_ini()
    assert RunConfig.from_ini(text) == cfg
    assert RunConfig.from_ini(text).to_ini() == text
    with pytest.raises(ValueError):
        RunConfig.from_ini("[env]\nbogus = 1\n")


def test_seed_env_override(tmp_path, monkeypatch):
    p = tmp_path / "c.ini"
    p.write_text(SMALL)
    monkeypatch.setenv("SYMBXRL_SEED", "17")
    cfg = load_config(str(p))
    assert cfg.env.seed == 17 and cfg.agent.seed == 17


def test_train_outputs(work):
    out = work / "train"
    assert {p.name for p in out.iterdir()} == {"ckpt_2.json", "ckpt_4.json", "store.json", "training_curve.csv"}
    assert rows(out / "training_curve.csv")[0] == ["episode", "return", "moving_avg20"]
    assert len(rows(out / "training_curve.csv")) == 5


def test_pipeline_and_outputs(work):
    cfg, d = str(work / "c.ini"), work
    assert main(["simulate", "--config", cfg, "--checkpoint", str(d / "train/ckpt_4.json"), "--out", str(d / "sim")]) == 0
    assert main(["symbolize", "--schema", "a2", "--in", str(d / "sim/trace.jsonl"), "--out", str(d / "sim/s.jsonl"),
                 "--store", str(d / "sim/db.json")]) == 0
    assert main(["explain", "--in", str(d / "sim/s.jsonl"), "--kg", str(d / "sim/kg.json"), "--dist",
                 str(d / "sim/dist.csv"), "--density", str(d / "sim/dens.csv"), "--normalize", "row"]) == 0
    assert rows(d / "sim/dist.csv")[0] == ["key", "count", "prob"]
    assert rows(d / "sim/dens.csv")[0] == ["row", "col", "value"]
    assert (d / "sim/dens.marginals.csv").exists()
    assert len((d / "sim/trace.jsonl").read_text().splitlines()) == 120


def test_a1_pipeline(tmp_path):
    assert main(["simulate", "--schema", "a1", "--steps", "80", "--out", str(tmp_path)]) == 0
    assert main(["symbolize", "--schema", "a1", "--in", str(tmp_path / "trace.jsonl"),
                 "--out", str(tmp_path / "s.jsonl")]) == 0
    assert main(["explain", "--in", str(tmp_path / "s.jsonl"), "--kg", str(tmp_path / "kg.dot"), "--group", "1"]) == 0
    assert "PRB@mmtc" in (tmp_path / "kg.dot").read_text()


def test_steer_summary_shape(work):
    out = work / "steer"
    assert main(["steer", "--config", str(work / "c.ini"), "--mode", "reward-max", "--seeds", "3",
                 "--start-frac", "0.0", "--checkpoint", str(work / "train/ckpt_4.json"), "--out", str(out)]) == 0
    table = rows(out / "summary.csv")
    assert table[0][:4] == ["seed", "cum_baseline", "cum_steered", "rel_improvement"]
    assert len(table) == 1 + 3 + 1 and table[-1][0] == "median"
    assert len(list((out / "reward-max").glob("*.decisions.jsonl"))) == 3


def test_steer_condition_zero_violations(work):
    intents = work / "intents.txt"
    intents.write_text("notSchedule(6) @ [80,105]\n")
    out = work / "cond"
    assert main(["steer", "--config", str(work / "c.ini"), "--mode", "condition", "--intent", str(intents),
                 "--checkpoint", str(work / "train/ckpt_4.json"), "--out", str(out)]) == 0
    table = rows(out / "summary.csv")
    col = table[0].index("violations")
    assert [r[col] for r in table[1:-1]] == ["0", "0", "0"]


def test_compare_identical_runs(work):
    run = work / "steer" / "baseline"
    if not run.exists():
        test_steer_summary_shape(work)
    assert main(["compare", str(run), str(run), "--out", str(work / "cmp")]) == 0
    deltas = rows(work / "cmp/action_deltas.csv")
    assert all(float(r[3]) == 0 for r in deltas[1:])
    rel = rows(work / "cmp/relative_reward.csv")
    assert all(float(r[4]) == 0 for r in rel[1:])


def test_rerun_is_byte_identical(work, tmp_path):
    args = ["steer", "--config", str(work / "c.ini"), "--mode", "reward-max", "--seeds", "1",
            "--checkpoint", str(work / "train/ckpt_4.json")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for p in sorted((tmp_path / "a").rglob("*")):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_errors_exit_nonzero(work, tmp_path, capsys):
    assert main(["symbolize", "--schema", "a2", "--in", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "s.jsonl")]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("schedule(1)\nnotSchedule(1)\n")
    assert main(["steer", "--config", str(work / "c.ini"), "--mode", "condition", "--intent", str(bad),
                 "--checkpoint", str(work / "train/ckpt_4.json"), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
