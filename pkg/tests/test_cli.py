import configparser
import json
import subprocess
import sys
from pathlib import Path

import pytest

from bgc_marl.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMOKE = str(CONFIGS / "smoke_2v2.ini")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    run = tmp_path_factory.mktemp("cli") / "run"
    assert main(["train", SMOKE, "--run-dir", str(run)]) == 0
    return run


def _json_line(text):
    return json.loads([l for l in text.splitlines() if l.startswith("{")][-1])


def test_train_smoke_emits_checkpoint(trained):
    ckpts = sorted(p.name for p in trained.glob("*.pt"))
    assert "final.pt" in ckpts and len(ckpts) >= 2
    assert (trained / "metrics.jsonl").read_text().strip()
    snap = configparser.ConfigParser()
    snap.read(trained / "config.resolved.ini")
    assert snap["env"]["n_allies"] == "2"


def test_train_mixer_override_in_snapshot(tmp_path, capsys):
    run = tmp_path / "vdn"
    assert main(["train", SMOKE, "--mixer", "vdn", "--total-steps", "60", "--run-dir", str(run)]) == 0
    snap = configparser.ConfigParser()
    snap.read(run / "config.resolved.ini")
    assert snap["model"]["mixer"] == "vdn"
    assert snap["training"]["total_env_steps"] == "60"
    assert _json_line(capsys.readouterr().out)["run_dir"] == str(run)


def test_train_run_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BGC_RUN_ROOT", str(tmp_path / "root"))
    assert main(["train", SMOKE, "--total-steps", "30", "--set", "io.run_id=abc"]) == 0
    assert (tmp_path / "root" / "abc" / "final.pt").exists()


def test_train_missing_field_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[env]\nn_enemies = 2\n")
    assert main(["train", str(bad)]) == 1
    assert "env.n_allies" in capsys.readouterr().err


def test_train_bad_override_exit_1(capsys):
    assert main(["train", SMOKE, "--set", "model.knn_k=9"]) == 1
    assert "model.knn_k" in capsys.readouterr().err


def test_evaluate_byte_identical_and_recount(trained, tmp_path, capsys):
    ck = str(trained / "final.pt")
    assert main(["evaluate", ck, "--episodes", "6", "--seed", "3", "--out", str(tmp_path / "a.json")]) == 0
    first = capsys.readouterr().out
    assert main(["evaluate", ck, "--episodes", "6", "--seed", "3", "--out", str(tmp_path / "b.json")]) == 0
    assert capsys.readouterr().out == first
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    rec = _json_line(first)
    assert rec["win_rate"] == sum(rec["wins"]) / len(rec["wins"]) and len(rec["wins"]) == 6


def test_evaluate_with_config_file(trained, capsys):
    assert main(["evaluate", str(trained / "final.pt"), "--config", str(trained / "config.resolved.ini"), "--episodes", "2"]) == 0


def test_evaluate_zero_episodes_usage_error(trained, capsys):
    assert main(["evaluate", str(trained / "final.pt"), "--episodes", "0"]) == 1
    assert "episodes" in capsys.readouterr().err


def test_evaluate_shape_mismatch_names_dims(trained, capsys):
    code = main(["evaluate", str(trained / "final.pt"), "--config", SMOKE, "--set", "model.hidden_dim=12", "--episodes", "1"])
    assert code == 2
    err = capsys.readouterr().err
    assert "12" in err and "16" in err


def test_missing_checkpoint_exit_2(tmp_path, capsys):
    assert main(["evaluate", str(tmp_path / "nope.pt")]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["distill", str(tmp_path / "nope.pt")]) == 2


def test_distill_then_distilled_eval_and_export(trained, tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["distill", str(trained / "final.pt"), "--steps", "120", "--run-dir", str(out)]) == 0
    rep = _json_line(capsys.readouterr().out)
    assert 0 <= rep["agreement"] <= 1 and -1 <= rep["win_rate_delta"] <= 1
    student = out / "student.pt"
    assert student.exists()
    assert main(["evaluate", str(student), "--mode", "distilled", "--episodes", "3"]) == 0
    capsys.readouterr()
    assert main(["distill", str(trained / "final.pt"), "--steps", "120", "--run-dir", str(tmp_path / "d2")]) == 0
    assert (out / "distill_report.json").read_bytes() == (tmp_path / "d2" / "distill_report.json").read_bytes()

    emb = tmp_path / "emb.tsv"
    assert main(["export-embeddings", str(student), "--out", str(emb), "--episodes", "3", "--mode", "distilled"]) == 0
    rows = _json_line(capsys.readouterr().out)["rows"]
    assert rows == len(emb.read_text().splitlines())


def test_evaluate_distilled_without_student_exit_2(trained, capsys):
    assert main(["evaluate", str(trained / "final.pt"), "--mode", "distilled", "--episodes", "1"]) == 2


def test_export_counts_and_determinism(trained, tmp_path, capsys):
    ck = str(trained / "final.pt")
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert main(["evaluate", ck, "--episodes", "4", "--seed", "1"]) == 0
    capsys.readouterr()
    assert main(["export-embeddings", ck, "--out", str(a), "--episodes", "4", "--seed", "1"]) == 0
    assert main(["export-embeddings", ck, "--out", str(b), "--episodes", "4", "--seed", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = [l.split("\t") for l in a.read_text().splitlines()]
    assert {len(l) for l in lines} == {6 + 8}
    episodes = {l[0] for l in lines}
    assert len(episodes) == 4
    # rows = sum of episode lengths x agents; lengths from the timestep column
    lengths = [max(int(l[1]) for l in lines if l[0] == e) + 1 for e in episodes]
    assert len(lines) == sum(lengths) * 2


def test_export_unwritable_path(trained, capsys):
    assert main(["export-embeddings", str(trained / "final.pt"), "--out", "/nonexistent/dir/x.tsv", "--episodes", "1"]) == 2


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_console_script_runs(trained):
    proc = subprocess.run([sys.executable, "-m", "bgc_marl.cli", "evaluate", str(trained / "final.pt"), "--episodes", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("win_rate ")
