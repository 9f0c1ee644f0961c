"""Prompt assembly shared by the sandbox, forge, and orchestrator.

The instruction suffix and the two question-creation templates are fixed
strings; questions are substituted literally (no format-string
re-interpolation), so braces inside question text survive untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .data import DemoSet, Question

# Appended to every question to form the model instruction.
PROMPT_PR = "Let's generate a python program to solve the question."

PLACEHOLDER = "{question}"

TEMPLATE_NAMES = ("complexify", "diversify")


@dataclass(frozen=True)
class PromptTemplate:
    """A question-creation prompt with a single {question} placeholder."""

    name: str  # "complexify" | "diversify"
    body: str

    def __post_init__(self):
        if self.name not in TEMPLATE_NAMES:
            raise ValueError(f"unknown template {self.name!r}")
        if self.body.count(PLACEHOLDER) != 1:
            raise ValueError(f"template {self.name} must contain {PLACEHOLDER} exactly once")


def load_template(name: str, path: Optional[str | Path] = None) -> PromptTemplate:
    """Load a shipped template, or an override file when a path is given."""
    if path:
        body = Path(path).read_text(encoding="utf-8")
    else:
        body = resources.files("fdd").joinpath(f"templates/{name}.txt").read_text("utf-8")
    if body.endswith("\n"):
        body = body[:-1]
    return PromptTemplate(name=name, body=body)


def render_prompt(template: PromptTemplate, q: Question) -> str:
    return template.body.replace(PLACEHOLDER, q.text)


def build_instruction(q: Question) -> str:
    """Question text plus the fixed instruction suffix; the student input."""
    return f"{q.text}\n{PROMPT_PR}"


def build_pot_prompt(question_text: str, demos: DemoSet) -> str:
    """Few-shot prompt: each demo as instruction plus fenced program, then
    the target question with the same instruction suffix.

    The demos double as format guidance: programs print the final answer
    as the last non-empty stdout line.
    """
    parts = []
    for demo_q, demo_p in demos.demos:
        parts.append(f"{demo_q}\n{PROMPT_PR}\n```python\n{demo_p}\n```")
    parts.append(f"{question_text}\n{PROMPT_PR}")
    return "\n\n".join(parts)
