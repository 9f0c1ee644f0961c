"""Contamination analysis between generated questions and test sets.

Similarity is ROUGE-L F1 over lowercase whitespace tokens, averaged across
a seeded sample of generated questions against every test question. The
pairwise loop runs on a compiled kernel when available, with a pure-Python
fallback selected at import (FDD_PURE_PYTHON=1 forces the fallback).
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import data
from .data import Question, RoundState

if os.environ.get("FDD_PURE_PYTHON"):
    from . import _rougepy as _kernel

    KERNEL = "python"
else:
    try:
        from . import _rougecore as _kernel  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:
        from . import _rougepy as _kernel  # type: ignore[no-redef]

        KERNEL = "python"

STRATEGIES = ("complex_gen", "diverse_gen")

CSV_COLUMNS = ("round", "strategy", "test_set", "m", "n", "mean_rouge_l", "p50", "p95")


class EmptySet(ValueError):
    """Raised when a similarity computation gets an empty question set."""


class MissingState(FileNotFoundError):
    """Raised when a run directory holds no round state to audit."""


def kernel_name() -> str:
    return KERNEL


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _pack(docs: Sequence[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    off = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, d in enumerate(docs):
        off[i + 1] = off[i] + len(d)
    flat = np.empty(int(off[-1]), dtype=np.intc)
    pos = 0
    for d in docs:
        flat[pos : pos + len(d)] = d
        pos += len(d)
    return flat, off


def _score_matrix(gen_texts: Sequence[str], test_texts: Sequence[str]) -> np.ndarray:
    # Token ids are interned over the union vocabulary; LCS only needs
    # equality, not the strings themselves.
    vocab: dict[str, int] = {}
    def ids(text: str) -> list[int]:
        out = []
        for tok in tokenize(text):
            if tok not in vocab:
                vocab[tok] = len(vocab)
            out.append(vocab[tok])
        return out

    gen_docs = [ids(t) for t in gen_texts]
    test_docs = [ids(t) for t in test_texts]
    gen_flat, gen_off = _pack(gen_docs)
    test_flat, test_off = _pack(test_docs)
    return _kernel.pair_scores(gen_flat, gen_off, test_flat, test_off)


def rouge_l(a: str, b: str) -> float:
    """LCS-based F1 on lowercase whitespace tokens; 0 when the LCS is empty."""
    return float(_score_matrix([a], [b])[0, 0])


@dataclass(frozen=True)
class SimilarityReport:
    """Sampled mean pairwise similarity of one generated set vs one test set."""

    generated_set: str
    test_set: str
    m: int
    n: int
    mean_rouge_l: float
    p50: float
    p95: float
    histogram: tuple[int, ...]  # 10 uniform bins over [0, 1]
    sample_fraction: float
    rng_seed: int

    def __post_init__(self):
        if isinstance(self.histogram, list):
            object.__setattr__(self, "histogram", tuple(self.histogram))
        if self.m < 1 or self.n < 1:
            raise ValueError("reports require non-empty sets")
        if not 0.0 <= self.mean_rouge_l <= 1.0:
            raise ValueError("mean_rouge_l out of [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "generated_set": self.generated_set,
            "test_set": self.test_set,
            "m": self.m,
            "n": self.n,
            "mean_rouge_l": self.mean_rouge_l,
            "p50": self.p50,
            "p95": self.p95,
            "histogram": list(self.histogram),
            "sample_fraction": self.sample_fraction,
            "rng_seed": self.rng_seed,
        }


def _texts(items: Iterable[Any]) -> list[str]:
    return [it.text if isinstance(it, Question) else str(it) for it in items]


def dataset_similarity(
    gen: Sequence[Any],
    test: Sequence[Any],
    fraction: float = 0.3,
    seed: int = 0,
    generated_set: str = "generated",
    test_set: str = "test",
    sample_key: str = "",
) -> SimilarityReport:
    """Mean pairwise rouge_l between a sampled generated set and a test set.

    The sample is uniform without replacement, size ceil(fraction * |gen|),
    drawn from a RNG keyed by seed plus sample_key so repeated runs land on
    the same subset. Accepts Questions or plain strings.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    gen_texts = _texts(gen)
    test_texts = _texts(test)
    if not gen_texts or not test_texts:
        raise EmptySet("similarity needs non-empty generated and test sets")
    m = math.ceil(fraction * len(gen_texts))
    rng = random.Random(f"{seed}:{sample_key}")
    idx = rng.sample(range(len(gen_texts)), m)
    sampled = [gen_texts[i] for i in idx]
    scores = _score_matrix(sampled, test_texts).ravel()
    hist, _ = np.histogram(scores, bins=10, range=(0.0, 1.0))
    return SimilarityReport(
        generated_set=generated_set,
        test_set=test_set,
        m=m,
        n=len(test_texts),
        mean_rouge_l=float(scores.mean()),
        p50=float(np.percentile(scores, 50)),
        p95=float(np.percentile(scores, 95)),
        histogram=tuple(int(c) for c in hist),
        sample_fraction=fraction,
        rng_seed=seed,
    )


@dataclass(frozen=True)
class AuditRow:
    round: int
    strategy: str
    report: SimilarityReport

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"round": self.round, "strategy": self.strategy}
        d.update(self.report.to_dict())
        return d


def load_round_states(run_dir: str | Path) -> list[RoundState]:
    """All persisted round states in a run directory, in round order."""
    run_dir = Path(run_dir)
    found = []
    for p in run_dir.glob("round_*.state.json"):
        m = re.fullmatch(r"round_(\d+)\.state\.json", p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise MissingState(f"no round state files under {run_dir}")
    return [data.load_state(p) for _, p in sorted(found)]


def audit_rounds(
    states: Sequence[RoundState],
    questions: Mapping[str, Question],
    test_sets: Mapping[str, Sequence[Any]],
    fraction: float = 0.3,
    seed: int = 0,
) -> list[AuditRow]:
    """One report per (round, strategy, test set).

    Rounds that admitted no questions under a strategy produce no row for
    it; round 0 never generates, so audits start at round 1. The sample of
    a generated set is shared across test sets.
    """
    rows: list[AuditRow] = []
    for state in states:
        for strategy in STRATEGIES:
            group = [
                questions[qid]
                for qid in sorted(state.generated)
                if qid in questions and questions[qid].origin == strategy
            ]
            if not group:
                continue
            for test_name in sorted(test_sets):
                rows.append(
                    AuditRow(
                        round=state.round,
                        strategy=strategy,
                        report=dataset_similarity(
                            group,
                            test_sets[test_name],
                            fraction=fraction,
                            seed=seed,
                            generated_set=f"round{state.round}.{strategy}",
                            test_set=test_name,
                            sample_key=f"{state.round}:{strategy}",
                        ),
                    )
                )
    return rows


def write_audit_reports(rows: Sequence[AuditRow], json_path: str | Path, csv_path: str | Path) -> None:
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in rows], f, indent=2, sort_keys=True)
        f.write("\n")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            rep = r.report
            w.writerow(
                [
                    r.round,
                    r.strategy,
                    rep.test_set,
                    rep.m,
                    rep.n,
                    f"{rep.mean_rouge_l:.6f}",
                    f"{rep.p50:.6f}",
                    f"{rep.p95:.6f}",
                ]
            )
