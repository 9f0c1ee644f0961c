import json

import pytest

from fdd.config import (
    ConfigError,
    apply_overrides,
    build_app_config,
    config_hash,
    load_demos,
    load_document,
    parse_config,
)

BASE_TOML = """
corpus = "seed.jsonl"
rounds = 2
workers = 3

[teacher]
base_url = "mock://t"
model_name = "teacher"
max_retries = 0

[trainer]
cmd = ["python3", "-m", "fdd.mock_trainer"]
"""


def write_cfg(tmp_path, text=BASE_TOML, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_minimal_toml(tmp_path):
    app = parse_config(write_cfg(tmp_path))
    assert app.pipeline.teacher.base_url == "mock://t"
    assert app.pipeline.trainer_cmd == ("python3", "-m", "fdd.mock_trainer")
    assert app.pipeline.rounds == 2
    assert app.pipeline.workers == 3
    assert app.pipeline.student is None
    assert app.corpus_path == tmp_path / "seed.jsonl"  # relative to the config file
    assert app.runs_dir == tmp_path / "runs"
    assert app.run_dir is None
    assert len(app.config_hash) == 8


def test_parse_json_config(tmp_path):
    doc = {
        "teacher": {"base_url": "mock://t", "model_name": "m"},
        "trainer": {"cmd": ["x"]},
        "run_dir": "pinned",
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    app = parse_config(p)
    assert app.run_dir == tmp_path / "pinned"


def test_sections_map_to_pipeline(tmp_path):
    text = BASE_TOML + """
[vote]
tie_policy = "discard"
min_support = 2

[audit]
fraction = 0.5
seed = 9

[sandbox]
time_limit = 2.5
max_stdout = 1024

[student]
base_url = "mock://s"
model_name = "student"
"""
    app = parse_config(write_cfg(tmp_path, text))
    p = app.pipeline
    assert p.tie_policy == "discard"
    assert p.min_support == 2
    assert p.audit_fraction == 0.5
    assert p.audit_seed == 9
    assert p.sandbox.time_limit == 2.5
    assert p.sandbox.max_stdout == 1024
    assert p.student.base_url == "mock://s"


def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        parse_config(write_cfg(tmp_path, "turbo = true\n" + BASE_TOML))


def test_unknown_section_key(tmp_path):
    with pytest.raises(ConfigError, match=r"\[teacher\]|unknown keys"):
        parse_config(write_cfg(tmp_path, BASE_TOML + "\n[vote]\npolicy = \"x\"\n"))


def test_missing_teacher(tmp_path):
    with pytest.raises(ConfigError, match="teacher"):
        parse_config(write_cfg(tmp_path, "[trainer]\ncmd = [\"x\"]\n"))


def test_bad_trainer_cmd(tmp_path):
    with pytest.raises(ConfigError, match="trainer.cmd"):
        parse_config(write_cfg(tmp_path, """
[teacher]
base_url = "mock://t"
model_name = "m"

[trainer]
cmd = "not-a-list"
"""))


def test_pinned_instruction_rejected(tmp_path):
    with pytest.raises(ConfigError, match="prompt_pr"):
        parse_config(write_cfg(tmp_path, BASE_TOML + "\nprompt_pr = \"Just answer.\"\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "absent.toml")


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(write_cfg(tmp_path, "rounds = = 2"))


def test_overrides_parse_json_values(tmp_path):
    app = parse_config(
        write_cfg(tmp_path),
        overrides=[
            "rounds=5",
            "vote.min_support=2",
            "teacher.model_name=other",
            'trainer.cmd=["t2"]',
            "run_dir=fixed",
        ],
    )
    assert app.pipeline.rounds == 5
    assert app.pipeline.min_support == 2
    assert app.pipeline.teacher.model_name == "other"
    assert app.pipeline.trainer_cmd == ("t2",)
    assert app.run_dir == tmp_path / "fixed"


def test_override_must_have_equals():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["rounds"])


def test_override_cannot_descend_into_scalar():
    with pytest.raises(ConfigError):
        apply_overrides({"rounds": 2}, ["rounds.deep=1"])


def test_override_introduces_validation_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path), overrides=["bogus_key=1"])


def test_config_hash_tracks_content():
    a = {"rounds": 1}
    b = {"rounds": 2}
    assert config_hash(a) == config_hash(a)
    assert config_hash(a) != config_hash(b)


def test_load_document_rejects_non_table(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("[1, 2, 3]")
    with pytest.raises(ConfigError):
        load_document(p)


def test_demos_file(tmp_path):
    demos = tmp_path / "demos.jsonl"
    demos.write_text(
        json.dumps({"question": "Q1?", "program": "print(1)"}) + "\n"
        + json.dumps({"question": "Q2?", "program": "print(2)"}) + "\n"
    )
    ds = load_demos(demos)
    assert ds.k == 2
    assert ds.demos[0] == ("Q1?", "print(1)")

    app = parse_config(write_cfg(tmp_path, 'demos = "demos.jsonl"\n' + BASE_TOML))
    assert app.pipeline.demos == ds


def test_demos_file_errors(tmp_path):
    missing = tmp_path / "nope.jsonl"
    with pytest.raises(ConfigError):
        load_demos(missing)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    with pytest.raises(ConfigError):
        load_demos(empty)
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"question": "q"}) + "\n")
    with pytest.raises(ConfigError):
        load_demos(bad)


def test_template_override_paths(tmp_path):
    t = tmp_path / "custom.txt"
    t.write_text("Make it harder: {question}\nCreated Math Question:", encoding="utf-8")
    app = parse_config(write_cfg(tmp_path, BASE_TOML + '\n[templates]\ncomplexify = "custom.txt"\n'))
    assert app.pipeline.complexify_template == str(t)
    assert app.pipeline.diversify_template is None


def test_sandbox_interpreter_cmd_validation(tmp_path):
    text = BASE_TOML + '\n[sandbox]\ninterpreter_cmd = "python3"\n'
    with pytest.raises(ConfigError, match="interpreter_cmd"):
        parse_config(write_cfg(tmp_path, text))


def test_build_app_config_requires_known_sections():
    with pytest.raises(ConfigError):
        build_app_config({"teacher": {"base_url": "u", "model_name": "m"},
                          "trainer": {"cmd": ["x"]},
                          "vote": "not-a-table"}, base_dir=None)
