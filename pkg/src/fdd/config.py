"""Config loading: one TOML or JSON document mirroring the pipeline knobs.

Unknown keys fail fast so typos surface at parse time instead of becoming
silently ignored settings. Dotted --set overrides are applied to the
parsed document before validation, which means an override can both tweak
a value and introduce the same errors a file could.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import DemoSet
from .gateway import ModelEndpoint
from .orchestrator import DEFAULT_DEMOS, PipelineConfig
from .sandbox import SandboxConfig

_TOP_KEYS = {
    "rounds",
    "n_pots",
    "question_temperature",
    "pot_temperature",
    "prompt_pr",
    "rel_tol",
    "abs_tol",
    "workers",
    "max_tokens",
    "corpus",
    "demos",
    "runs_dir",
    "run_dir",
    "teacher",
    "student",
    "trainer",
    "vote",
    "sandbox",
    "audit",
    "templates",
}
_ENDPOINT_KEYS = {
    "base_url",
    "model_name",
    "auth_token_env",
    "max_concurrency",
    "timeout",
    "max_retries",
    "backoff_base",
    "backoff_factor",
    "backoff_jitter",
}
_TRAINER_KEYS = {"cmd"}
_VOTE_KEYS = {"tie_policy", "min_support"}
_SANDBOX_KEYS = {"interpreter_cmd", "time_limit", "memory_limit", "max_stdout"}
_AUDIT_KEYS = {"fraction", "seed"}
_TEMPLATE_KEYS = {"complexify", "diversify"}

_SECTION_KEYS = {
    "teacher": _ENDPOINT_KEYS,
    "student": _ENDPOINT_KEYS,
    "trainer": _TRAINER_KEYS,
    "vote": _VOTE_KEYS,
    "sandbox": _SANDBOX_KEYS,
    "audit": _AUDIT_KEYS,
    "templates": _TEMPLATE_KEYS,
}


class ConfigError(ValueError):
    """Bad config file, unknown key, or invalid value."""


@dataclass(frozen=True)
class AppConfig:
    """Validated configuration plus the run-location settings around it."""

    pipeline: PipelineConfig
    corpus_path: Optional[Path]
    run_dir: Optional[Path]
    runs_dir: Path
    config_hash: str


def load_document(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        if path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        else:
            with open(path, "rb") as f:
                doc = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a table/object at top level")
    return doc


def apply_overrides(doc: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    """Apply dotted key=value overrides; values parse as JSON when they can.

    ``--set vote.min_support=2`` sets an integer, ``--set corpus=seed.jsonl``
    a plain string, ``--set trainer.cmd='["python","-m","fdd.mock_trainer"]'``
    a list.
    """
    out = json.loads(json.dumps(doc))  # deep copy, JSON-safe by construction
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into non-table {part!r}")
            node = nxt
        node[parts[-1]] = value
    return out


def _check_keys(doc: dict[str, Any]) -> None:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        sub = doc.get(section)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be a table")
        bad = set(sub) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(bad)}")


def _endpoint(section: dict[str, Any], name: str) -> ModelEndpoint:
    try:
        return ModelEndpoint(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def load_demos(path: str | Path) -> DemoSet:
    """Demo file JSONL: {"question", "program"} per line."""
    pairs = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                d = json.loads(line)
                pairs.append((d["question"], d["program"]))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad demos file {path}: {exc}") from exc
    if not pairs:
        raise ConfigError(f"demos file {path} is empty")
    return DemoSet(demos=tuple(pairs))


def config_hash(doc: dict[str, Any]) -> str:
    canonical = json.dumps(doc, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]


def _resolve(base_dir: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base_dir / p


def build_app_config(doc: dict[str, Any], base_dir: Path) -> AppConfig:
    """Validate a parsed document into an AppConfig.

    Relative paths in the document resolve against the config file's
    directory, so a config can travel with its corpus.
    """
    _check_keys(doc)

    teacher_doc = doc.get("teacher")
    if not teacher_doc:
        raise ConfigError("config needs a [teacher] section with base_url and model_name")
    teacher = _endpoint(teacher_doc, "teacher")
    student = _endpoint(doc["student"], "student") if doc.get("student") else None

    trainer_doc = doc.get("trainer") or {}
    cmd = trainer_doc.get("cmd")
    if not cmd or not isinstance(cmd, list) or not all(isinstance(c, str) for c in cmd):
        raise ConfigError("config needs trainer.cmd as a list of strings")

    vote = doc.get("vote") or {}
    audit = doc.get("audit") or {}
    templates = doc.get("templates") or {}

    sandbox_doc = dict(doc.get("sandbox") or {})
    if "interpreter_cmd" in sandbox_doc:
        ic = sandbox_doc["interpreter_cmd"]
        if not isinstance(ic, list) or not all(isinstance(c, str) for c in ic):
            raise ConfigError("sandbox.interpreter_cmd must be a list of strings")
        sandbox_doc["interpreter_cmd"] = tuple(ic)
    try:
        sandbox_cfg = SandboxConfig(**sandbox_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[sandbox]: {exc}") from exc

    demos = DEFAULT_DEMOS
    if doc.get("demos"):
        demos = load_demos(_resolve(base_dir, doc["demos"]))

    kwargs: dict[str, Any] = {
        "teacher": teacher,
        "student": student,
        "trainer_cmd": tuple(cmd),
        "sandbox": sandbox_cfg,
        "demos": demos,
    }
    for key in (
        "rounds",
        "n_pots",
        "question_temperature",
        "pot_temperature",
        "prompt_pr",
        "rel_tol",
        "abs_tol",
        "workers",
        "max_tokens",
    ):
        if key in doc:
            kwargs[key] = doc[key]
    if "tie_policy" in vote:
        kwargs["tie_policy"] = vote["tie_policy"]
    if "min_support" in vote:
        kwargs["min_support"] = vote["min_support"]
    if "fraction" in audit:
        kwargs["audit_fraction"] = audit["fraction"]
    if "seed" in audit:
        kwargs["audit_seed"] = audit["seed"]
    if "complexify" in templates:
        kwargs["complexify_template"] = str(_resolve(base_dir, templates["complexify"]))
    if "diversify" in templates:
        kwargs["diversify_template"] = str(_resolve(base_dir, templates["diversify"]))

    try:
        pipeline = PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return AppConfig(
        pipeline=pipeline,
        corpus_path=_resolve(base_dir, doc["corpus"]) if doc.get("corpus") else None,
        run_dir=_resolve(base_dir, doc["run_dir"]) if doc.get("run_dir") else None,
        runs_dir=_resolve(base_dir, doc.get("runs_dir", "runs")),
        config_hash=config_hash(doc),
    )


def parse_config(path: str | Path, overrides: Sequence[str] = ()) -> AppConfig:
    path = Path(path)
    doc = apply_overrides(load_document(path), overrides)
    return build_app_config(doc, path.resolve().parent)
