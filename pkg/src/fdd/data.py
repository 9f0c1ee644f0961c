"""Domain model and JSONL persistence for the distillation pipeline.

Every artifact the pipeline reads or writes goes through this module:
questions, candidate programs, dataset entries, and per-round pool state.
All types are immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

ORIGINS = ("initial", "complex_gen", "diverse_gen")
EXEC_STATUSES = ("ok", "runtime_error", "timeout", "parse_failure")

# Stripped before attempting a numeric parse; covers currency-style answers.
_CURRENCY_CHARS = "$€£¥"


class EmptyAnswer(ValueError):
    """Raised when an answer string is blank after trimming."""


class SchemaError(ValueError):
    """Malformed dataset line. Carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Answer:
    """A normalized gold or extracted answer.

    ``raw`` keeps the original string; ``numeric_value`` is set only for
    numeric answers. Comparison goes through :func:`answers_match`, never
    through equality of the raw text.
    """

    kind: str  # "numeric" | "textual"
    raw: str
    numeric_value: Optional[float] = None  # int or float when numeric

    @property
    def value(self):
        if self.kind == "numeric":
            return self.numeric_value
        return self.raw.strip().lower()

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "raw": self.raw}
        if self.kind == "numeric":
            d["numeric_value"] = self.numeric_value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Answer":
        return cls(kind=d["kind"], raw=d["raw"], numeric_value=d.get("numeric_value"))


def normalize_answer(raw: str) -> Answer:
    """Normalize a raw answer string into an :class:`Answer`.

    Numeric when the string parses as a number after stripping whitespace,
    commas, currency symbols, a trailing percent sign, and a trailing
    period; textual otherwise. "5.0" and "5" normalize to equal values.
    """
    if raw is None or not raw.strip():
        raise EmptyAnswer("answer is blank")
    s = raw.strip()
    if s.endswith("."):
        s = s[:-1].strip()
    s = s.replace(",", "")
    for ch in _CURRENCY_CHARS:
        s = s.replace(ch, "")
    if s.endswith("%"):
        s = s[:-1].strip()
    s = s.strip()
    num = _parse_number(s)
    if num is not None:
        return Answer(kind="numeric", raw=raw, numeric_value=num)
    return Answer(kind="textual", raw=raw)


def _parse_number(s: str) -> Optional[float]:
    if not s:
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        v = float(s)
    except ValueError:
        return None
    # inf/nan round-trip badly through JSON and never occur as real answers.
    if not math.isfinite(v):
        return None
    return v


def answers_match(a: Answer, b: Answer, rel_tol: float = 1e-6, abs_tol: float = 1e-6) -> bool:
    """Tolerant equality: numeric pairs within tolerance, textual pairs exact.

    Mixed kinds never match. Symmetric and reflexive for normalized answers.
    """
    if a.kind != b.kind:
        return False
    if a.kind == "numeric":
        x, y = float(a.numeric_value), float(b.numeric_value)
        return abs(x - y) <= max(abs_tol, rel_tol * max(abs(x), abs(y)))
    return a.value == b.value


@dataclass(frozen=True)
class Question:
    """One math problem with provenance.

    ``origin="initial"`` questions come from the seed corpus (round 0, no
    parent); generated questions point at the seed question they were
    derived from. ``gold`` is None only transiently, before voting assigns
    a synthetic gold answer.
    """

    id: str
    text: str
    gold: Optional[Answer]
    origin: str = "initial"
    parent_id: Optional[str] = None
    round: int = 0

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if not self.text.strip():
            raise ValueError("question text is blank")
        if self.origin == "initial" and (self.parent_id is not None or self.round != 0):
            raise ValueError("initial questions have no parent and round 0")
        if self.origin != "initial" and self.parent_id is None:
            raise ValueError("generated questions require a parent_id")

    def with_gold(self, gold: Answer) -> "Question":
        return Question(
            id=self.id,
            text=self.text,
            gold=gold,
            origin=self.origin,
            parent_id=self.parent_id,
            round=self.round,
        )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "text": self.text}
        if self.gold is not None:
            d["gold"] = self.gold.to_dict()
        d["origin"] = self.origin
        if self.parent_id is not None:
            d["parent_id"] = self.parent_id
        d["round"] = self.round
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Question":
        gold = Answer.from_dict(d["gold"]) if "gold" in d else None
        return cls(
            id=d["id"],
            text=d["text"],
            gold=gold,
            origin=d["origin"],
            parent_id=d.get("parent_id"),
            round=d["round"],
        )


@dataclass(frozen=True)
class PoTCandidate:
    """One generated program together with its execution outcome."""

    program: str
    exec_status: str  # one of EXEC_STATUSES
    extracted: Optional[Answer] = None
    verified: bool = False

    def __post_init__(self):
        if self.exec_status not in EXEC_STATUSES:
            raise ValueError(f"unknown exec_status {self.exec_status!r}")
        if not self.program:
            raise ValueError("program is empty")
        if self.verified and (self.exec_status != "ok" or self.extracted is None):
            raise ValueError("verified candidates must have executed ok with an answer")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"program": self.program, "exec_status": self.exec_status}
        if self.extracted is not None:
            d["extracted"] = self.extracted.to_dict()
        d["verified"] = self.verified
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PoTCandidate":
        extracted = Answer.from_dict(d["extracted"]) if "extracted" in d else None
        return cls(
            program=d["program"],
            exec_status=d["exec_status"],
            extracted=extracted,
            verified=d["verified"],
        )


@dataclass(frozen=True)
class DistillationEntry:
    """A question plus its verified programs: the unit of the training set."""

    question: Question
    pots: tuple[PoTCandidate, ...]

    def __post_init__(self):
        if not self.pots:
            raise ValueError("entry needs at least one verified program")
        if any(not p.verified for p in self.pots):
            raise ValueError("all entry programs must be verified")
        if isinstance(self.pots, list):
            object.__setattr__(self, "pots", tuple(self.pots))

    def to_dict(self) -> dict[str, Any]:
        d = self.question.to_dict()
        d["pots"] = [p.to_dict() for p in self.pots]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DistillationEntry":
        pots = tuple(PoTCandidate.from_dict(p) for p in d["pots"])
        q = {k: v for k, v in d.items() if k != "pots"}
        return cls(question=Question.from_dict(q), pots=pots)


@dataclass(frozen=True)
class DemoSet:
    """Hand-written question/program demonstration pairs for prompting."""

    demos: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.demos:
            raise ValueError("need at least one demonstration")
        if isinstance(self.demos, list):
            object.__setattr__(self, "demos", tuple(tuple(d) for d in self.demos))

    @property
    def k(self) -> int:
        return len(self.demos)


@dataclass(frozen=True)
class RoundState:
    """Pools and counters for one round.

    ``seed_pool`` is the pool the *next* classification pass will consume.
    ``easy_pool``/``hard_pool`` partition the pool that was classified this
    round (the previous state's seed pool), and ``generated`` holds ids of
    questions synthesized and admitted this round. Round 0 carries only the
    initial seed pool.
    """

    round: int
    seed_pool: frozenset[str]
    easy_pool: frozenset[str] = frozenset()
    hard_pool: frozenset[str] = frozenset()
    generated: frozenset[str] = frozenset()
    dataset_snapshot: str = ""

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round must be >= 0")
        for name in ("seed_pool", "easy_pool", "hard_pool", "generated"):
            val = getattr(self, name)
            if not isinstance(val, frozenset):
                object.__setattr__(self, name, frozenset(val))
        if self.easy_pool & self.hard_pool:
            raise ValueError("easy and hard pools overlap")
        if self.generated & (self.easy_pool | self.hard_pool):
            raise ValueError("generated ids collide with classified pool")

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "seed_pool": sorted(self.seed_pool),
            "easy_pool": sorted(self.easy_pool),
            "hard_pool": sorted(self.hard_pool),
            "generated": sorted(self.generated),
            "dataset_snapshot": self.dataset_snapshot,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoundState":
        return cls(
            round=d["round"],
            seed_pool=frozenset(d["seed_pool"]),
            easy_pool=frozenset(d["easy_pool"]),
            hard_pool=frozenset(d["hard_pool"]),
            generated=frozenset(d["generated"]),
            dataset_snapshot=d["dataset_snapshot"],
        )


def _dump_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False)


def save_dataset(entries: Iterable[DistillationEntry], path: str | Path) -> None:
    """Write entries as JSONL, one entry per line, stable field order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(_dump_line(entry.to_dict()) + "\n")


def append_entry(entry: DistillationEntry, path: str | Path) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(_dump_line(entry.to_dict()) + "\n")


def load_dataset(path: str | Path) -> list[DistillationEntry]:
    """Read a JSONL dataset back; inverse of :func:`save_dataset`.

    Raises :class:`SchemaError` with the offending line number on any
    malformed line, and ``OSError`` if the file cannot be read.
    """
    entries: list[DistillationEntry] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            try:
                entries.append(DistillationEntry.from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(str(exc) or type(exc).__name__, line=lineno) from exc
    return entries


def save_state(state: RoundState, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(state.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_state(path: str | Path) -> RoundState:
    with open(path, "r", encoding="utf-8") as f:
        return RoundState.from_dict(json.load(f))


def state_path(run_dir: str | Path, round_no: int) -> Path:
    return Path(run_dir) / f"round_{round_no}.state.json"
