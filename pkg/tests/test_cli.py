import csv
import json

import pytest

from agentrouter.cli import main
from agentrouter.config import ConfigError, load_config
from agentrouter.dataio import load_agent_cache
from agentrouter.evaluate import TABLE_METHODS
from agentrouter.gnn import init_params, save_checkpoint
from agentrouter.synthetic import write_fixture


def _run(*argv):
    return main([str(a) for a in argv])


def _log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_train_writes_one_dir_per_seed(trained_fixture):
    for seed in (0, 1, 2):
        assert (trained_fixture / f"seed-{seed}" / "checkpoint.bin").exists()
        assert len(_log(trained_fixture / f"seed-{seed}" / "train_log.jsonl")) == 20
    assert "seeds = 0,1,2" in (trained_fixture / "config.txt").read_text()
    assert (trained_fixture / "train_summary.txt").exists()


def test_seed0_golden_log(trained_fixture):
    log = _log(trained_fixture / "seed-0" / "train_log.jsonl")
    assert [e["epoch"] for e in log if e["checkpoint_written"]] == [1, 4]
    assert max(e["val_f1"] for e in log) == 100.0
    assert log[0]["mean_train_kl"] == pytest.approx(0.9210516905697658, rel=1e-9)
    assert log[-1]["mean_train_kl"] == pytest.approx(0.0008521807195104898, rel=1e-6)


def test_eval_rows_and_router_beats_vote(trained_fixture, fixture_cfg, tmp_path):
    assert _run("eval", "--config", fixture_cfg, "--checkpoint", trained_fixture, "--out", tmp_path) == 0
    rows = _log(tmp_path / "report.jsonl")
    assert [r["method"] for r in rows] == list(TABLE_METHODS)
    by = {r["method"]: r for r in rows}
    assert all(r["n_seeds"] == 3 for r in rows)
    assert by["router"]["f1_mean"] >= by["majority_vote"]["f1_mean"]
    assert by["oracle"]["f1_mean"] >= max(r["f1_mean"] for r in rows)
    routing = _log(tmp_path / "routing-seed-0.jsonl")
    assert len(routing) == 10 and len(routing[0]["probs"]) == 24


def test_eval_with_k1_and_single_checkpoint(trained_fixture, fixture_cfg, tmp_path):
    ckpt = trained_fixture / "seed-0" / "checkpoint.bin"
    assert _run("eval", "--config", fixture_cfg, "--checkpoint", ckpt, "--k", 1, "--out", tmp_path) == 0
    rows = {r["method"]: r for r in _log(tmp_path / "report.jsonl")}
    assert rows["router"]["k"] == 1 and rows["router"]["n_seeds"] == 1


def test_eval_rejects_foreign_agent_order(fixture_cfg, tmp_path):
    cache = load_agent_cache(fixture_cfg.parent / "agent_cache.jsonl")
    order = sorted(cache.agent_ids(), reverse=True)
    ckpt = tmp_path / "bad.bin"
    save_checkpoint(ckpt, init_params(0, 64 + 15, 32, 2), order)
    assert _run("eval", "--config", fixture_cfg, "--checkpoint", ckpt, "--out", tmp_path / "o") == 3


def test_sweep_base_row_is_zero(trained_fixture, fixture_cfg, tmp_path):
    assert _run("sweep-topk", "--config", fixture_cfg, "--checkpoint", trained_fixture,
                "--set", "k_list=1,3,24", "--out", tmp_path) == 0
    with (tmp_path / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["k"] for r in rows] == ["1", "3", "24"]
    assert float(rows[-1]["f1_delta_pct"]) == 0.0 and float(rows[-1]["em_delta_pct"]) == 0.0


def test_transfer_identity_and_missing_reference(trained_fixture, fixture_cfg, tmp_path, capsys):
    assert _run("transfer", "--config", fixture_cfg, "--checkpoint", trained_fixture,
                "--target", f"{fixture_cfg}={trained_fixture}", "--target", f"{fixture_cfg}={trained_fixture}",
                "--set", "k_list=3,24", "--out", tmp_path) == 0
    tables = sorted(tmp_path.glob("transfer-*.csv"))
    assert len(tables) == 2
    with tables[0].open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["k"] for r in rows] == ["3", "24"]
    assert all(float(r["f1_drop"]) == 0 and float(r["em_drop"]) == 0 for r in rows)
    code = _run("transfer", "--config", fixture_cfg, "--checkpoint", trained_fixture,
                "--target", f"{fixture_cfg}={tmp_path / 'nowhere'}", "--out", tmp_path / "x")
    assert code == 3
    assert "train on synthetic first" in capsys.readouterr().err


def test_build_graphs(fixture_cfg, tmp_path):
    assert _run("build-graphs", "--config", fixture_cfg, "--out", tmp_path / "a") == 0
    assert _run("build-graphs", "--config", fixture_cfg, "--out", tmp_path / "b") == 0
    files = sorted(p.name for p in (tmp_path / "a" / "graphs").iterdir())
    assert len(files) == 30
    for name in files:
        assert (tmp_path / "a" / "graphs" / name).read_bytes() == (tmp_path / "b" / "graphs" / name).read_bytes()
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert stats["query"] == 1.0 and stats["agent"] == 24.0


def test_usage_errors(fixture_cfg, tmp_path):
    assert _run("train", "--config", fixture_cfg, "--set", "epochs=0", "--out", tmp_path / "a") == 2
    assert _run("train", "--config", fixture_cfg, "--set", "colour=blue", "--out", tmp_path / "b") == 2
    assert _run("train", "--config", tmp_path / "missing.cfg", "--out", tmp_path / "c") == 2
    with pytest.raises(SystemExit) as exc:
        main(["eval"])
    assert exc.value.code == 2


def test_missing_dataset_path(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train_file = nope.jsonl\nval_file = nope2.jsonl\n")
    assert _run("build-graphs", "--config", cfg, "--out", tmp_path / "o") == 2


def test_agents_run_and_judge_with_mock(tmp_path):
    cfg = write_fixture(tmp_path / "fx")
    cfg.write_text(cfg.read_text() + "train_range = 0:2\nval_range = 0:1\ntest_range = 1:2\n")
    out = tmp_path / "run"
    assert _run("agents", "run", "--config", cfg, "--mock-backend", "--designs", "raw,mad", "--out", out) == 0
    info = json.loads((out / "agents_run.json").read_text())
    assert info["written"] == 4 * 8 and info["errors"] == 0
    assert _run("agents", "run", "--config", cfg, "--mock-backend", "--designs", "raw,mad",
                "--cache", out / "agent_cache.jsonl", "--out", tmp_path / "again") == 0
    assert json.loads((tmp_path / "again" / "agents_run.json").read_text())["skipped"] == 32
    assert _run("agents", "judge", "--config", cfg, "--mock-backend", "--designs", "raw",
                "--out", tmp_path / "judge") == 0
    rows = (tmp_path / "judge" / "agent_entities.jsonl").read_text().splitlines()
    assert len(rows) == 4 * 4
    assert _run("agents", "run", "--config", cfg, "--designs", "raw", "--out", tmp_path / "no") == 2


def test_report_variance(fixture_cfg, tmp_path):
    assert _run("report", "variance", "--config", fixture_cfg, "--out", tmp_path) == 0
    with (tmp_path / "variance.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 24


def test_config_overrides_and_paths(fixture_cfg):
    cfg = load_config(fixture_cfg, ["k = 3", "seeds = 5"])
    assert cfg.k == 3 and cfg.seeds == (5,)
    assert cfg.train_file == str(fixture_cfg.parent / "train.jsonl")
    with pytest.raises(ConfigError, match="unknown key 'x'"):
        load_config(None, ["x = 1"])
    with pytest.raises(ConfigError):
        load_config(None, ["drop_mode = ratio"])
