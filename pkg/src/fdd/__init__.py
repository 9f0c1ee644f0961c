"""Feedback-driven Program-of-Thought distillation for math word problems.

A teacher model writes small Python programs that solve seed questions;
verified programs become training data for a student model. Each round
the student's failures steer what new questions get synthesized, the
dataset grows, and the student is retrained from scratch by an external
trainer command.
"""

from .data import (
    Answer,
    DemoSet,
    DistillationEntry,
    PoTCandidate,
    Question,
    RoundState,
    answers_match,
    normalize_answer,
)
from .gateway import GenRequest, GenResponse, ModelEndpoint, generate
from .orchestrator import (
    PipelineConfig,
    TrainingExample,
    build_instruction,
    run_finetune,
    run_initialization,
    run_pipeline,
    run_round,
)
from .prompts import PROMPT_PR
from .sandbox import SandboxConfig, VoteResult, execute, extract_program, vote_gold

__version__ = "0.1.0"
