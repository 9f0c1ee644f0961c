import json
import sys

import pytest

from fdd.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main

CORPUS = [
    {"id": "c1", "text": "Compute 7 + 5.", "gold": 12},
    {"id": "c2", "text": "Compute 8 + 3.", "gold": 11},
    {"id": "c3", "text": "Compute 3 + 9.", "gold": 12},
    {"id": "c4", "text": "Compute 6 + 9.", "gold": 15},
]


def write_setup(tmp_path, extra="", corpus=CORPUS):
    (tmp_path / "corpus.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in corpus), encoding="utf-8"
    )
    cmd = json.dumps([sys.executable, "-m", "fdd.mock_trainer"])
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        f"""
corpus = "corpus.jsonl"
run_dir = "run1"
{extra}
[teacher]
base_url = "mock://dryrun-teacher"
model_name = "mock-teacher"
max_retries = 0

[student]
base_url = "mock://student"
model_name = "mock-student"
max_retries = 0

[trainer]
cmd = {cmd}
""",
        encoding="utf-8",
    )
    return cfg


def test_init_round_audit_flow(tmp_path, capsys):
    cfg = str(write_setup(tmp_path))
    run_dir = tmp_path / "run1"

    assert main(["init", "-c", cfg]) == EXIT_OK
    out = capsys.readouterr().out
    assert "4 entries kept, 0 rejected" in out
    assert (run_dir / "dataset.jsonl").exists()
    assert (run_dir / "round_0.state.json").exists()

    assert main(["round", "-c", cfg, "--round", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "easy 2, hard 2" in out
    assert (run_dir / "round_1.state.json").exists()
    assert (run_dir / "round_1.classify.jsonl").exists()
    assert (run_dir / "trainer_round_1" / "endpoint.json").exists()

    # skipping ahead fails: round 3 needs round 2's state first
    assert main(["round", "-c", cfg, "--round", "3"]) == EXIT_STAGE
    assert "round_2.state.json" in capsys.readouterr().err

    test_set = tmp_path / "probe_set.jsonl"
    test_set.write_text(
        json.dumps("Compute 15 plus 8 now.") + "\n"
        + json.dumps({"text": "Compute 19 + 10."}) + "\n"
        + json.dumps({"question": "something about hens"}) + "\n"
    )
    assert main(["audit", "-c", cfg, "--test-sets", str(test_set)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "kernel" in out
    report = json.loads((run_dir / "audit_report.json").read_text())
    assert {r["strategy"] for r in report} == {"complex_gen", "diverse_gen"}
    assert all(r["test_set"] == "probe_set" for r in report)
    csv_lines = (run_dir / "audit_report.csv").read_text().splitlines()
    assert csv_lines[0].startswith("round,strategy,test_set")
    assert len(csv_lines) == len(report) + 1


def test_pipeline_command(tmp_path, capsys):
    cfg = str(write_setup(tmp_path, extra="rounds = 1\n"))
    assert main(["pipeline", "-c", cfg]) == EXIT_OK
    out = capsys.readouterr().out
    assert "pipeline: 1 rounds" in out
    report = json.loads((tmp_path / "run1" / "pipeline_report.json").read_text())
    assert report["trainer_rounds"] == [0, 1]


def test_dryrun_with_config(tmp_path, capsys):
    cfg = str(write_setup(tmp_path, extra="rounds = 1\nworkers = 4\n"))
    rc = main(["dryrun", "-c", cfg, "--set", "run_dir=dry"])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "2 trainer invocations" in out
    assert (tmp_path / "dry" / "pipeline_report.json").exists()


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["init", "-c", str(tmp_path / "absent.toml")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_commands_require_config(capsys):
    assert main(["init"]) == EXIT_CONFIG
    assert "config" in capsys.readouterr().err


def test_bad_override_exits_2(tmp_path, capsys):
    cfg = str(write_setup(tmp_path))
    assert main(["init", "-c", cfg, "--set", "not_a_key=1"]) == EXIT_CONFIG


def test_round_needs_run_dir(tmp_path, capsys):
    cfg = str(write_setup(tmp_path))
    assert main(["round", "-c", cfg, "--set", "run_dir=", "--round", "1"]) == EXIT_CONFIG
    assert "run_dir" in capsys.readouterr().err


def test_round_before_init_exits_1(tmp_path, capsys):
    cfg = str(write_setup(tmp_path))
    assert main(["round", "-c", cfg, "--round", "1"]) == EXIT_STAGE
    assert "round_0.state.json" in capsys.readouterr().err


def test_trainer_failure_exits_1(tmp_path, capsys):
    cfg = str(write_setup(tmp_path, corpus=CORPUS[:1]))
    rc = main(["pipeline", "-c", cfg, "--set", 'trainer.cmd=["false"]'])
    assert rc == EXIT_STAGE
    assert "[finetune]" in capsys.readouterr().err


def test_audit_without_states_exits_1(tmp_path, capsys):
    cfg = str(write_setup(tmp_path))
    (tmp_path / "run1").mkdir()
    ts = tmp_path / "t.jsonl"
    ts.write_text(json.dumps("anything") + "\n")
    assert main(["audit", "-c", cfg, "--test-sets", str(ts)]) == EXIT_STAGE


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
