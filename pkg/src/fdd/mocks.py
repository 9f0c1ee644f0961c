"""Deterministic in-process endpoints and corpus for dry runs and tests.

The mock teacher and student speak entirely in "Compute X + Y." style
questions, so PoT generation, classification, and question creation are
pure functions of the prompt. The student deliberately answers questions
with odd results wrong, giving every round a stable easy/hard split
without any trained model behind it.
"""

from __future__ import annotations

import re

from .data import Question, normalize_answer
from .gateway import GenRequest, MockTransport, ModelEndpoint, register_mock

TEACHER_URL = "mock://dryrun-teacher"
STUDENT_URL = "mock://student"
STUDENT_MODEL = "mock-student"

# The one question the mock teacher always gets wrong; it exercises the
# initialization reject path.
BOTCHED_TEXT = "Compute 13 + 0."

_ARITH_RE = re.compile(r"Compute (\d+) ([+*]) (\d+)\.")


def _eval(x: int, op: str, y: int) -> int:
    return x + y if op == "+" else x * y


def _last_arith(prompt: str) -> tuple[int, str, int]:
    # The target question is always the last arithmetic expression in the
    # prompt; demos and template text never contain one.
    found = _ARITH_RE.findall(prompt)
    if not found:
        raise ValueError(f"mock prompt carries no arithmetic question: {prompt[:80]!r}")
    x, op, y = found[-1]
    return int(x), op, int(y)


def arith_question(qid: str, x: int, op: str, y: int) -> Question:
    return Question(
        id=qid,
        text=f"Compute {x} {op} {y}.",
        gold=normalize_answer(str(_eval(x, op, y))),
    )


DRYRUN_CORPUS: tuple[Question, ...] = (
    arith_question("q0001", 7, "+", 5),
    arith_question("q0002", 3, "+", 9),
    arith_question("q0003", 8, "+", 3),
    arith_question("q0004", 6, "+", 9),
    arith_question("q0005", 10, "+", 4),
    arith_question("q0006", 13, "+", 0),
)


def _teacher_respond(prompt: str, req: GenRequest) -> list[str]:
    if "Math Question Creator" in prompt:
        x, _, y = _last_arith(prompt)
        if "more challenging" in prompt:
            text = f"Compute {2 * x + 1} * {y + 3}."
        else:
            text = f"Compute {x + 11} + {y + 7}."
        return [f"Created Math Question: {text}"] * req.n_samples
    x, op, y = _last_arith(prompt)
    val = _eval(x, op, y)
    if BOTCHED_TEXT in prompt:
        val -= 1
    return [f"```python\nprint({val})\n```"] * req.n_samples


def _student_respond(prompt: str, req: GenRequest) -> list[str]:
    x, op, y = _last_arith(prompt)
    val = _eval(x, op, y)
    # Wrong answer whenever the true result is odd: those become hard.
    out = val if val % 2 == 0 else val + 1
    return [f"```python\nprint({out})\n```"] * req.n_samples


def register_dryrun_mocks(max_concurrency: int = 4) -> tuple[ModelEndpoint, ModelEndpoint]:
    """Install the scripted teacher and student; returns their endpoints.

    The student transport lives at the URL the mock trainer's
    endpoint.json points at, so the pipeline resolves each freshly
    "trained" student straight back to it.
    """
    teacher = ModelEndpoint(
        base_url=TEACHER_URL,
        model_name="mock-teacher",
        max_concurrency=max_concurrency,
        max_retries=0,
    )
    student = ModelEndpoint(
        base_url=STUDENT_URL,
        model_name=STUDENT_MODEL,
        max_concurrency=max_concurrency,
        max_retries=0,
    )
    register_mock(TEACHER_URL, MockTransport([(r".", _teacher_respond)]))
    register_mock(STUDENT_URL, MockTransport([(r".", _student_respond)]))
    return teacher, student
