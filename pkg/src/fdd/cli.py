"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages:

    fdd init -c cfg.toml                   build the round-0 dataset
    fdd round -c cfg.toml --round 2        one classify/extend/finetune cycle
    fdd pipeline -c cfg.toml               full multi-round run
    fdd audit -c cfg.toml --test-sets ...  contamination reports
    fdd dryrun                             full pipeline on built-in mocks

Artifacts land under a run directory named <UTC stamp>-<config hash>
inside runs_dir; pinning run_dir in the config (or via --set run_dir=...)
selects an existing directory, which is how interrupted runs resume.
Exit codes: 0 success, 1 stage failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import audit as audit_mod
from . import data, gateway, mocks, orchestrator
from .config import AppConfig, ConfigError, parse_config
from .data import state_path
from .orchestrator import DATASET_FILE, StageError

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2

log = logging.getLogger("fdd")


def _run_dir(app: AppConfig) -> Path:
    if app.run_dir:
        return app.run_dir
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    base = app.runs_dir / f"{stamp}-{app.config_hash}"
    cand = base
    i = 1
    while cand.exists():  # same-second starts must not share a directory
        cand = Path(f"{base}-{i}")
        i += 1
    return cand


def _require_corpus(app: AppConfig) -> list[data.Question]:
    if app.corpus_path is None:
        raise ConfigError("config needs a corpus path for this command")
    return orchestrator.load_corpus(app.corpus_path)


def _ensure_known_mocks(app: AppConfig) -> None:
    # Configs may point at the built-in mock URLs; the transports behind
    # them live in-process and need registering before any call.
    urls = {app.pipeline.teacher.base_url}
    if app.pipeline.student:
        urls.add(app.pipeline.student.base_url)
    if urls & {mocks.TEACHER_URL, mocks.STUDENT_URL}:
        mocks.register_dryrun_mocks()


def cmd_init(app: AppConfig) -> int:
    _ensure_known_mocks(app)
    corpus = _require_corpus(app)
    run_dir = _run_dir(app)
    entries, state = orchestrator.run_initialization(corpus, app.pipeline, run_dir)
    print(f"run_dir: {run_dir}")
    print(f"initialization: {len(entries)} entries kept, {len(corpus) - len(entries)} rejected")
    return EXIT_OK


def cmd_round(app: AppConfig, round_no: int) -> int:
    if round_no < 1:
        raise ConfigError("--round must be >= 1")
    if app.run_dir is None:
        raise ConfigError("round needs run_dir set (config key or --set run_dir=...)")
    _ensure_known_mocks(app)
    run_dir = app.run_dir
    prev = state_path(run_dir, round_no - 1)
    if not prev.exists():
        raise StageError(
            f"round {round_no} needs {prev.name}; run earlier stages first",
            stage=f"round_{round_no}",
        )
    state = data.load_state(prev)
    entries = data.load_dataset(run_dir / DATASET_FILE)
    student = app.pipeline.student or orchestrator.read_endpoint_descriptor(
        run_dir / f"trainer_round_{round_no - 1}" / "endpoint.json"
    )
    state, admitted = orchestrator.run_round(state, entries, app.pipeline, run_dir, student)
    orchestrator.run_finetune(list(entries) + admitted, round_no, app.pipeline, run_dir)
    print(f"run_dir: {run_dir}")
    print(
        f"round {round_no}: easy {len(state.easy_pool)}, hard {len(state.hard_pool)}, "
        f"admitted {len(admitted)}, next seed pool {len(state.seed_pool)}"
    )
    return EXIT_OK


def cmd_pipeline(app: AppConfig) -> int:
    _ensure_known_mocks(app)
    corpus = _require_corpus(app)
    run_dir = _run_dir(app)
    report = orchestrator.run_pipeline(corpus, app.pipeline, run_dir)
    print(f"run_dir: {run_dir}")
    print(
        f"pipeline: {report['rounds_completed']} rounds, "
        f"dataset {report['dataset_size']} entries"
    )
    return EXIT_OK


def _load_test_set(path: Path) -> list[str]:
    texts = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            item = json.loads(line)
            if isinstance(item, str):
                texts.append(item)
            elif isinstance(item, dict) and (item.get("text") or item.get("question")):
                texts.append(item.get("text") or item["question"])
            else:
                raise data.SchemaError(f"test set {path} needs text/question fields", line=lineno)
    if not texts:
        raise data.SchemaError(f"test set {path} is empty", line=0)
    return texts


def cmd_audit(app: AppConfig, test_set_paths: Sequence[str]) -> int:
    if app.run_dir is None:
        raise ConfigError("audit needs run_dir set (config key or --set run_dir=...)")
    run_dir = app.run_dir
    states = audit_mod.load_round_states(run_dir)
    entries = data.load_dataset(run_dir / DATASET_FILE)
    questions = {e.question.id: e.question for e in entries}
    test_sets = {Path(p).stem: _load_test_set(Path(p)) for p in test_set_paths}
    rows = audit_mod.audit_rounds(
        states,
        questions,
        test_sets,
        fraction=app.pipeline.audit_fraction,
        seed=app.pipeline.audit_seed,
    )
    json_path = run_dir / "audit_report.json"
    csv_path = run_dir / "audit_report.csv"
    audit_mod.write_audit_reports(rows, json_path, csv_path)
    print(f"audit: {len(rows)} reports ({audit_mod.kernel_name()} kernel)")
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_dryrun(app: Optional[AppConfig]) -> int:
    teacher, _ = mocks.register_dryrun_mocks()
    trainer_cmd = (sys.executable, "-m", "fdd.mock_trainer")
    if app is not None:
        pipeline = replace(app.pipeline, teacher=teacher, trainer_cmd=trainer_cmd)
        run_dir = _run_dir(app)
    else:
        pipeline = orchestrator.PipelineConfig(teacher=teacher, trainer_cmd=trainer_cmd, workers=2)
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        run_dir = Path("runs") / f"{stamp}-dryrun"
        i = 1
        while run_dir.exists():
            run_dir = Path("runs") / f"{stamp}-dryrun-{i}"
            i += 1
    report = orchestrator.run_pipeline(list(mocks.DRYRUN_CORPUS), pipeline, run_dir)
    print(f"run_dir: {run_dir}")
    print(
        f"dryrun: {report['rounds_completed']} rounds, "
        f"dataset {report['dataset_size']} entries, "
        f"{len(report['trainer_rounds'])} trainer invocations"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML or JSON config file")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. --set vote.min_support=2",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="fdd", description="feedback-driven PoT distillation")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("init", parents=[common], help="build the round-0 dataset")
    p_round = sub.add_parser("round", parents=[common], help="run one round + finetune")
    p_round.add_argument("--round", type=int, required=True, help="round number (1-based)")
    sub.add_parser("pipeline", parents=[common], help="full multi-round run")
    p_audit = sub.add_parser("audit", parents=[common], help="similarity reports vs test sets")
    p_audit.add_argument("--test-sets", nargs="+", required=True, metavar="JSONL")
    sub.add_parser("dryrun", parents=[common], help="full pipeline on built-in mocks")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        app = parse_config(args.config, args.overrides) if args.config else None
        if args.command == "dryrun":
            return cmd_dryrun(app)
        if app is None:
            raise ConfigError("-c/--config is required")
        if args.command == "init":
            return cmd_init(app)
        if args.command == "round":
            return cmd_round(app, args.round)
        if args.command == "pipeline":
            return cmd_pipeline(app)
        if args.command == "audit":
            return cmd_audit(app, args.test_sets)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        tag = f" [{exc.stage}]" if exc.stage else ""
        print(f"stage error{tag}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (
        data.SchemaError,
        audit_mod.EmptySet,
        audit_mod.MissingState,
        gateway.AuthError,
        gateway.ProtocolError,
        gateway.TransportError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"stage error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
