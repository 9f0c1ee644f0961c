"""Pipeline driver: initialization, per-round dataset extension, fine-tuning.

The flow is a sequential state machine over rounds. Initialization builds
the round-0 dataset from teacher programs filtered against corpus gold;
each later round classifies the seed pool with the current student,
synthesizes one new question per seed, assigns synthetic gold by voting,
extends the cumulative dataset, and retrains the student from scratch via
an external trainer command. Per-question work fans out to a thread pool;
all file writes happen single-threaded between stages.
"""

from __future__ import annotations

import json
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from . import data, gateway
from .data import (
    DemoSet,
    DistillationEntry,
    Question,
    RoundState,
    SchemaError,
    append_entry,
    load_dataset,
    normalize_answer,
    save_state,
    state_path,
)
from .forge import (
    Classification,
    DuplicateQuestion,
    EmptyGeneration,
    classify,
    classify_path,
    normalize_question_text,
    save_classifications,
    strategy_for_label,
    synthesize,
)
from .gateway import ModelEndpoint
from .prompts import PROMPT_PR, build_instruction, load_template
from .sandbox import (
    POT_TEMPERATURE,
    PoTCandidate,
    SandboxConfig,
    generate_pots,
    verify_against_gold,
    vote_gold,
)

__all__ = [
    "DATASET_FILE",
    "DEFAULT_DEMOS",
    "MissingDescriptor",
    "PROMPT_PR",
    "PipelineConfig",
    "REJECTS_FILE",
    "REPORT_FILE",
    "StageError",
    "TrainerFailed",
    "TrainingExample",
    "build_instruction",
    "export_training_examples",
    "load_corpus",
    "read_endpoint_descriptor",
    "run_finetune",
    "run_initialization",
    "run_pipeline",
    "run_round",
    "train_file_path",
]

DATASET_FILE = "dataset.jsonl"
REJECTS_FILE = "rejects.jsonl"
REPORT_FILE = "pipeline_report.json"


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage


class TrainerFailed(StageError):
    def __init__(self, returncode: int, stderr_tail: str = ""):
        msg = f"trainer exited {returncode}"
        if stderr_tail:
            msg += f": {stderr_tail}"
        super().__init__(msg, stage="finetune")
        self.returncode = returncode
        self.stderr_tail = stderr_tail


class MissingDescriptor(StageError):
    def __init__(self, path: Union[str, Path]):
        super().__init__(f"trainer left no usable endpoint descriptor at {path}", stage="finetune")


# Fallback demonstrations; runs usually configure their own. The programs
# model the one convention everything downstream relies on: the final
# answer is the last line printed.
DEFAULT_DEMOS = DemoSet(
    demos=(
        (
            "Maya sold 48 bracelets in April and half as many in May. "
            "How many bracelets did she sell in the two months together?",
            "april = 48\nmay = april // 2\nprint(april + may)",
        ),
        (
            "A workshop uses 2 bolts of blue fabric for one banner and half that "
            "amount of white fabric. How many bolts does one banner take in total?",
            "blue = 2\nwhite = blue / 2\nprint(int(blue + white))",
        ),
    )
)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for a full distillation run.

    prompt_pr is pinned to the fixed instruction suffix: the student is
    trained on exactly the instruction used at generation time, so a
    config that changes one without the other is rejected outright.
    """

    teacher: ModelEndpoint
    trainer_cmd: tuple[str, ...]
    rounds: int = 3
    n_pots: int = 4
    question_temperature: float = 1.0
    pot_temperature: float = POT_TEMPERATURE
    prompt_pr: str = PROMPT_PR
    rel_tol: float = 1e-6
    abs_tol: float = 1e-6
    tie_policy: str = "earliest"
    min_support: int = 1
    workers: int = 4
    max_tokens: int = 1024
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    demos: DemoSet = DEFAULT_DEMOS
    student: Optional[ModelEndpoint] = None
    audit_fraction: float = 0.3
    audit_seed: int = 0
    # Optional paths overriding the shipped question-creation templates.
    complexify_template: Optional[str] = None
    diversify_template: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.trainer_cmd, list):
            object.__setattr__(self, "trainer_cmd", tuple(self.trainer_cmd))
        if not self.trainer_cmd:
            raise ValueError("trainer_cmd is empty")
        if self.prompt_pr != PROMPT_PR:
            raise ValueError(f"prompt_pr is fixed to {PROMPT_PR!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.n_pots < 1:
            raise ValueError("n_pots must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 < self.audit_fraction <= 1.0:
            raise ValueError("audit_fraction must be in (0, 1]")


@dataclass(frozen=True)
class TrainingExample:
    """One supervised pair: instruction in, verified program out."""

    input: str
    output: str

    def to_dict(self) -> dict[str, Any]:
        return {"input": self.input, "output": self.output}


def load_corpus(path: Union[str, Path]) -> list[Question]:
    """Seed corpus JSONL: {"id", "text", "gold"}, gold a string or number."""
    questions: list[Question] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                q = Question(
                    id=str(d["id"]),
                    text=d["text"],
                    gold=normalize_answer(str(d["gold"])),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"bad corpus record: {exc}", line=lineno) from exc
            if q.id in seen:
                raise SchemaError(f"duplicate corpus id {q.id!r}", line=lineno)
            seen.add(q.id)
            questions.append(q)
    if not questions:
        raise SchemaError("corpus is empty", line=0)
    return questions


def _log_rejects(run_dir: Path, records: Sequence[dict]) -> None:
    with open(run_dir / REJECTS_FILE, "a", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def _reject(question_id: str, reason: str, cands: Sequence[PoTCandidate] = ()) -> dict:
    summary = []
    for c in cands:
        if c.exec_status == "ok" and c.extracted is not None:
            summary.append(f"ok:{c.extracted.raw}")
        else:
            summary.append(c.exec_status)
    return {"question_id": question_id, "reason": reason, "candidates_summary": summary}


def run_initialization(
    corpus: Sequence[Question],
    cfg: PipelineConfig,
    run_dir: Union[str, Path],
) -> tuple[list[DistillationEntry], RoundState]:
    """Build the round-0 dataset: teacher programs filtered against gold.

    Every question keeping at least one verified program becomes an entry;
    the rest go to the reject log. Progress is checkpointed per question
    into dataset.jsonl / rejects.jsonl, so rerunning after an interruption
    skips anything already on disk and never re-queries the teacher for it.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    sp = state_path(run_dir, 0)
    dataset_file = run_dir / DATASET_FILE
    if sp.exists():
        # the dataset file may already hold later rounds; this stage owns
        # only the initial entries
        loaded = [e for e in load_dataset(dataset_file) if e.question.round == 0]
        return loaded, data.load_state(sp)

    entries: list[DistillationEntry] = []
    done: set[str] = set()
    if dataset_file.exists():
        # a partial-init resume can see later rounds in the file (say the
        # state file was lost); adopt only the entries this stage owns
        entries = [e for e in load_dataset(dataset_file) if e.question.round == 0]
        done = {e.question.id for e in entries}
    rejects_file = run_dir / REJECTS_FILE
    if rejects_file.exists():
        with open(rejects_file, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    done.add(json.loads(line)["question_id"])
    pending = [q for q in corpus if q.id not in done]

    def work(q: Question):
        cands = generate_pots(
            q,
            cfg.demos,
            cfg.n_pots,
            cfg.teacher,
            cfg.sandbox,
            temperature=cfg.pot_temperature,
            max_tokens=cfg.max_tokens,
        )
        checked = [
            verify_against_gold(c, q.gold, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
            for c in cands
        ]
        return q, checked

    # pool.map keeps corpus order, so checkpoint files are append-stable
    # across interrupted and fresh runs alike.
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for q, checked in pool.map(work, pending):
            kept = tuple(c for c in checked if c.verified)
            if kept:
                entry = DistillationEntry(question=q, pots=kept)
                append_entry(entry, dataset_file)
                entries.append(entry)
            else:
                _log_rejects(run_dir, [_reject(q.id, "no_verified_pot", checked)])

    state0 = RoundState(
        round=0,
        seed_pool=frozenset(e.question.id for e in entries),
        dataset_snapshot=DATASET_FILE,
    )
    save_state(state0, sp)
    return entries, state0


def run_round(
    state: RoundState,
    entries: Sequence[DistillationEntry],
    cfg: PipelineConfig,
    run_dir: Union[str, Path],
    student: ModelEndpoint,
) -> tuple[RoundState, list[DistillationEntry]]:
    """One classify → synthesize → vote → extend cycle.

    Returns the next round state and the entries admitted this round; the
    dataset file grows cumulatively and earlier rounds' files are never
    touched. A round whose state file already exists is not re-run.
    """
    run_dir = Path(run_dir)
    r = state.round + 1
    sp = state_path(run_dir, r)
    dataset_file = run_dir / DATASET_FILE
    if sp.exists():
        next_state = data.load_state(sp)
        admitted = [
            e for e in load_dataset(dataset_file) if e.question.id in next_state.generated
        ]
        return next_state, admitted

    by_id = {e.question.id: e for e in entries}
    seed_ids = sorted(state.seed_pool)
    missing = [qid for qid in seed_ids if qid not in by_id]
    if missing:
        raise StageError(
            f"seed pool references unknown questions: {missing[:5]}", stage=f"round_{r}"
        )

    def _classify(qid: str) -> Classification:
        return classify(
            by_id[qid],
            student,
            cfg.sandbox,
            rel_tol=cfg.rel_tol,
            abs_tol=cfg.abs_tol,
            max_tokens=cfg.max_tokens,
        )

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        classifications = list(pool.map(_classify, seed_ids))
    save_classifications(classifications, classify_path(run_dir, r))
    easy_ids = [c.question_id for c in classifications if c.label == "easy"]
    hard_ids = [c.question_id for c in classifications if c.label == "hard"]
    label_by_id = {c.question_id: c.label for c in classifications}

    existing = {normalize_question_text(e.question.text) for e in entries}
    templates = {
        "complexify": load_template("complexify", cfg.complexify_template),
        "diversify": load_template("diversify", cfg.diversify_template),
    }

    def _synth(qid: str):
        parent = by_id[qid].question
        strategy = strategy_for_label(label_by_id[qid])
        new_id = f"{qid}.r{r}"
        last: Exception = EmptyGeneration(new_id)
        # Blank and duplicate generations get one retry, then are skipped.
        for _ in range(2):
            try:
                return synthesize(
                    parent,
                    strategy,
                    cfg.teacher,
                    new_id=new_id,
                    round_no=r,
                    existing=existing,
                    template=templates[strategy],
                    temperature=cfg.question_temperature,
                    max_tokens=cfg.max_tokens,
                )
            except (EmptyGeneration, DuplicateQuestion) as exc:
                last = exc
        reason = "empty_generation" if isinstance(last, EmptyGeneration) else "duplicate_question"
        return _reject(new_id, reason)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        synth_results = list(pool.map(_synth, seed_ids))

    rejects: list[dict] = []
    new_questions: list[Question] = []
    seen_new: set[str] = set()
    for res in synth_results:
        if isinstance(res, dict):
            rejects.append(res)
            continue
        # Parallel workers dedup only against the pre-round dataset; twins
        # born within the same batch are caught here, earliest wins.
        key = normalize_question_text(res.text)
        if key in existing or key in seen_new:
            rejects.append(_reject(res.id, "duplicate_question"))
            continue
        seen_new.add(key)
        new_questions.append(res)

    def _vote(q: Question):
        cands = generate_pots(
            q,
            cfg.demos,
            cfg.n_pots,
            cfg.teacher,
            cfg.sandbox,
            temperature=cfg.pot_temperature,
            max_tokens=cfg.max_tokens,
        )
        vote = vote_gold(
            cands,
            tie_policy=cfg.tie_policy,
            min_support=cfg.min_support,
            rel_tol=cfg.rel_tol,
            abs_tol=cfg.abs_tol,
        )
        return q, cands, vote

    admitted: list[DistillationEntry] = []
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for q, cands, vote in pool.map(_vote, new_questions):
            if not vote.decided:
                rejects.append(_reject(q.id, "vote_undecided", cands))
                continue
            pots = tuple(
                verify_against_gold(c, vote.gold, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
                for c in vote.supporters
            )
            admitted.append(DistillationEntry(question=q.with_gold(vote.gold), pots=pots))

    for entry in admitted:
        append_entry(entry, dataset_file)
    if rejects:
        _log_rejects(run_dir, rejects)

    new_ids = frozenset(e.question.id for e in admitted)
    next_state = RoundState(
        round=r,
        seed_pool=frozenset(hard_ids) | new_ids,
        easy_pool=frozenset(easy_ids),
        hard_pool=frozenset(hard_ids),
        generated=new_ids,
        dataset_snapshot=DATASET_FILE,
    )
    save_state(next_state, sp)
    return next_state, admitted


def train_file_path(run_dir: Union[str, Path], round_no: int) -> Path:
    return Path(run_dir) / f"train_round_{round_no}.jsonl"


def export_training_examples(entries: Sequence[DistillationEntry]) -> list[TrainingExample]:
    """One example per (question, verified program) pair, dataset order."""
    return [
        TrainingExample(input=build_instruction(e.question), output=p.program)
        for e in entries
        for p in e.pots
    ]


def _trainer_argv(
    template: Sequence[str], train_file: Path, round_no: int, out_dir: Path
) -> list[str]:
    subs = {
        "{train_file}": str(train_file),
        "{round}": str(round_no),
        "{out_dir}": str(out_dir),
    }
    argv = list(template)
    if any(p in arg for arg in argv for p in subs):
        return [_substitute(arg, subs) for arg in argv]
    return argv + ["--train-file", str(train_file), "--round", str(round_no), "--out-dir", str(out_dir)]


def _substitute(arg: str, subs: dict[str, str]) -> str:
    for p, v in subs.items():
        arg = arg.replace(p, v)
    return arg


def run_finetune(
    entries: Sequence[DistillationEntry],
    round_no: int,
    cfg: PipelineConfig,
    run_dir: Union[str, Path],
) -> ModelEndpoint:
    """Export training pairs and invoke the external trainer.

    The trainer contract: it receives --train-file/--round/--out-dir
    (given positionally in the command template via {placeholders}, or
    appended when the template has none), initializes the student from
    scratch, exits 0, and writes <out_dir>/endpoint.json with at least
    base_url and model_name. The descriptor may point at a mock endpoint.
    """
    if not entries:
        raise StageError("cannot fine-tune on an empty dataset", stage="finetune")
    run_dir = Path(run_dir)
    out_dir = run_dir / f"trainer_round_{round_no}"
    desc_path = out_dir / "endpoint.json"
    if desc_path.exists():
        # descriptor is written last, so its presence means this round
        # already trained to completion; don't redo the work on resume
        try:
            return read_endpoint_descriptor(desc_path)
        except MissingDescriptor:
            pass
    train_file = train_file_path(run_dir, round_no)
    with open(train_file, "w", encoding="utf-8") as f:
        for ex in export_training_examples(entries):
            f.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")

    out_dir.mkdir(exist_ok=True)
    cmd = _trainer_argv(cfg.trainer_cmd, train_file, round_no, out_dir)
    proc = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    if proc.returncode != 0:
        raise TrainerFailed(proc.returncode, stderr_tail=proc.stderr[-2000:].strip())
    return read_endpoint_descriptor(out_dir / "endpoint.json")


def read_endpoint_descriptor(path: Union[str, Path]) -> ModelEndpoint:
    """Parse a trainer-written endpoint.json into a ModelEndpoint."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            desc = json.load(f)
        return ModelEndpoint(
            base_url=desc["base_url"],
            model_name=desc["model_name"],
            **{
                k: desc[k]
                for k in ("auth_token_env", "max_concurrency", "timeout", "max_retries")
                if k in desc
            },
        )
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise MissingDescriptor(path) from exc


def _finetune_stage(entries, round_no, cfg, run_dir) -> ModelEndpoint:
    try:
        return run_finetune(entries, round_no, cfg, run_dir)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(f"finetune round {round_no}: {exc}", stage="finetune") from exc


def run_pipeline(
    corpus: Sequence[Question],
    cfg: PipelineConfig,
    run_dir: Union[str, Path],
) -> dict[str, Any]:
    """Full run: initialization, fine-tune, then rounds of extend + fine-tune.

    Emits pipeline_report.json with per-round pool and dataset sizes,
    reject counts, trainer invocations, and accumulated token usage. Stops
    early when a round leaves the seed pool empty.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway.reset_usage()

    try:
        entries, state = run_initialization(corpus, cfg, run_dir)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(f"initialization: {exc}", stage="initialization") from exc
    if not entries:
        raise StageError("initialization produced an empty dataset", stage="initialization")

    per_round = [
        {
            "round": 0,
            "seed_pool": len(state.seed_pool),
            "easy": 0,
            "hard": 0,
            "generated": 0,
            "dataset_size": len(entries),
            "rejects": len(corpus) - len(entries),
        }
    ]
    student = _finetune_stage(entries, 0, cfg, run_dir)
    trainer_rounds = [0]
    early_stop = False

    for r in range(1, cfg.rounds + 1):
        try:
            state, admitted = run_round(state, entries, cfg, run_dir, student)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(f"round_{r}: {exc}", stage=f"round_{r}") from exc
        entries = list(entries) + admitted
        per_round.append(
            {
                "round": r,
                "seed_pool": len(state.seed_pool),
                "easy": len(state.easy_pool),
                "hard": len(state.hard_pool),
                "generated": len(state.generated),
                "dataset_size": len(entries),
                "rejects": len(state.easy_pool) + len(state.hard_pool) - len(state.generated),
            }
        )
        student = _finetune_stage(entries, r, cfg, run_dir)
        trainer_rounds.append(r)
        if not state.seed_pool:
            early_stop = True
            break

    report = {
        "rounds_requested": cfg.rounds,
        "rounds_completed": state.round,
        "early_stop": early_stop,
        "dataset_size": len(entries),
        "per_round": per_round,
        "trainer_rounds": trainer_rounds,
        "token_usage": gateway.usage_total(),
    }
    with open(run_dir / REPORT_FILE, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return report
