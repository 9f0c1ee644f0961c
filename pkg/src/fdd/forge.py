"""Question classification and synthesis.

Seed questions are labeled easy or hard by executing one greedy student
completion against the gold answer, then each label routes to its prompt
strategy: easy questions get complexified, hard questions get diversified.
Synthesized questions carry provenance but no gold answer; voting assigns
that downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

from . import gateway
from .data import Answer, DistillationEntry, Question, answers_match
from .gateway import GenRequest, ModelEndpoint
from .prompts import (
    PromptTemplate,
    build_instruction,
    load_template,
    render_prompt,
)
from .sandbox import NoProgram, SandboxConfig, execute, extract_program

__all__ = [
    "Classification",
    "DuplicateQuestion",
    "EmptyGeneration",
    "PromptTemplate",
    "classify",
    "classify_path",
    "load_classifications",
    "load_template",
    "normalize_question_text",
    "render_prompt",
    "save_classifications",
    "strategy_for_label",
    "synthesize",
]

LABELS = ("easy", "hard")

# Sampling temperature for question creation.
QUESTION_TEMPERATURE = 1.0

_STRATEGY_ORIGIN = {"complexify": "complex_gen", "diversify": "diverse_gen"}
_LABEL_STRATEGY = {"easy": "complexify", "hard": "diversify"}

_ANSWER_PREFIX = "Created Math Question:"


class EmptyGeneration(RuntimeError):
    """The model returned a blank question."""


class DuplicateQuestion(RuntimeError):
    """The model returned a question already present in the dataset."""


@dataclass(frozen=True)
class Classification:
    """Easy/hard label for one seed question, with the student's attempt."""

    question_id: str
    label: str
    student_answer: Optional[Answer] = None
    student_pot: Optional[str] = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.label == "easy" and self.student_answer is None:
            raise ValueError("easy labels require a matching student answer")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"question_id": self.question_id, "label": self.label}
        if self.student_answer is not None:
            d["student_answer"] = self.student_answer.to_dict()
        if self.student_pot is not None:
            d["student_pot"] = self.student_pot
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Classification":
        ans = d.get("student_answer")
        return cls(
            question_id=d["question_id"],
            label=d["label"],
            student_answer=Answer.from_dict(ans) if ans else None,
            student_pot=d.get("student_pot"),
        )


def strategy_for_label(label: str) -> str:
    return _LABEL_STRATEGY[label]


def classify(
    entry: DistillationEntry,
    student: ModelEndpoint,
    cfg: SandboxConfig,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-6,
    max_tokens: int = 1024,
) -> Classification:
    """Label a question easy iff the student solves it.

    One greedy completion is requested, its program executed, and the
    printed answer compared against gold; any failure along the way
    (no program, crash, timeout, wrong answer) means hard. Transport
    errors propagate so the caller can retry instead of mislabeling.
    """
    q = entry.question
    if q.gold is None:
        raise ValueError(f"question {q.id} has no gold answer")
    resp = gateway.generate(
        student,
        GenRequest(prompt=build_instruction(q), temperature=0.0, n_samples=1, max_tokens=max_tokens),
    )
    try:
        program = extract_program(resp.completions[0])
    except NoProgram:
        return Classification(question_id=q.id, label="hard")
    cand = execute(program, cfg)
    if cand.exec_status == "ok" and answers_match(
        cand.extracted, q.gold, rel_tol=rel_tol, abs_tol=abs_tol
    ):
        return Classification(
            question_id=q.id,
            label="easy",
            student_answer=cand.extracted,
            student_pot=program,
        )
    return Classification(
        question_id=q.id,
        label="hard",
        student_answer=cand.extracted,
        student_pot=program,
    )


def normalize_question_text(text: str) -> str:
    """Whitespace- and case-insensitive form used for exact-match dedup."""
    return " ".join(text.split()).lower()


def synthesize(
    q: Question,
    strategy: str,
    teacher: ModelEndpoint,
    new_id: str,
    round_no: int,
    existing: Iterable[str] = (),
    template: Optional[PromptTemplate] = None,
    temperature: float = QUESTION_TEMPERATURE,
    max_tokens: int = 1024,
) -> Question:
    """Create one new question from a seed using the given strategy.

    ``existing`` holds normalized texts already in the cumulative dataset;
    a completion matching any of them raises DuplicateQuestion. A leading
    "Created Math Question:" echo is stripped from the completion.
    """
    if strategy not in _STRATEGY_ORIGIN:
        raise ValueError(f"unknown strategy {strategy!r}")
    if template is None:
        template = load_template(strategy)
    resp = gateway.generate(
        teacher,
        GenRequest(
            prompt=render_prompt(template, q),
            temperature=temperature,
            n_samples=1,
            max_tokens=max_tokens,
        ),
    )
    text = resp.completions[0].strip()
    if text.startswith(_ANSWER_PREFIX):
        text = text[len(_ANSWER_PREFIX) :].strip()
    if not text:
        raise EmptyGeneration(f"blank generation for seed {q.id}")
    if normalize_question_text(text) in set(existing):
        raise DuplicateQuestion(f"generation for seed {q.id} duplicates an existing question")
    return Question(
        id=new_id,
        text=text,
        gold=None,
        origin=_STRATEGY_ORIGIN[strategy],
        parent_id=q.id,
        round=round_no,
    )


def classify_path(run_dir: str | Path, round_no: int) -> Path:
    return Path(run_dir) / f"round_{round_no}.classify.jsonl"


def save_classifications(items: Iterable[Classification], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in items:
            f.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def load_classifications(path: str | Path) -> list[Classification]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(Classification.from_dict(json.loads(line)))
    return out
