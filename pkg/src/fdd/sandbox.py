"""Program extraction, isolated execution, verification, and answer voting.

Teacher completions go through extract_program, run in a fresh interpreter
subprocess under a per-run temp directory, and come back as PoTCandidates
with the printed answer parsed from stdout. Gold answers are checked with
verify_against_gold or established by vote_gold plurality voting.
"""

from __future__ import annotations

import math
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import gateway
from .data import (
    Answer,
    DemoSet,
    PoTCandidate,
    Question,
    answers_match,
    normalize_answer,
)
from .gateway import GenRequest, ModelEndpoint
from .prompts import build_pot_prompt

# Generated programs run under this guard script, which blocks sockets,
# process spawns, and writes outside the working directory.
_RUNNER = str(Path(__file__).with_name("_sandbox_runner.py"))

TIE_POLICIES = ("earliest", "discard")

# Sampling temperature for program generation.
POT_TEMPERATURE = 0.7


class NoProgram(ValueError):
    """Raised when a completion contains no runnable program."""


def default_interpreter_cmd() -> tuple[str, ...]:
    return (sys.executable, "-I", _RUNNER)


@dataclass(frozen=True)
class SandboxConfig:
    """Limits for one program execution.

    The default command wraps programs in an audit-hook guard. Any other
    executable accepting a program file path can be substituted, in which
    case isolation is down to that executable; the wall-clock watchdog and
    stdout cap still apply. memory_limit is enforced where the platform
    supports address-space limits, best-effort elsewhere.
    """

    interpreter_cmd: tuple[str, ...] = field(default_factory=default_interpreter_cmd)
    time_limit: float = 5.0
    memory_limit: int = 512 * 1024 * 1024
    max_stdout: int = 65536

    def __post_init__(self):
        if isinstance(self.interpreter_cmd, list):
            object.__setattr__(self, "interpreter_cmd", tuple(self.interpreter_cmd))
        if not self.interpreter_cmd:
            raise ValueError("interpreter_cmd is empty")
        if shutil.which(self.interpreter_cmd[0]) is None:
            raise ValueError(f"interpreter not executable: {self.interpreter_cmd[0]!r}")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.memory_limit < 1:
            raise ValueError("memory_limit must be >= 1")
        if self.max_stdout < 1:
            raise ValueError("max_stdout must be >= 1")


@dataclass(frozen=True)
class VoteResult:
    """Outcome of plurality voting over one question's candidates.

    Undecided votes (no successful execution, unbreakable tie under the
    discard policy, or support below threshold) carry no gold answer.
    """

    gold: Optional[Answer]
    supporters: tuple[PoTCandidate, ...]
    tally: dict
    decided: bool

    def __post_init__(self):
        if isinstance(self.supporters, list):
            object.__setattr__(self, "supporters", tuple(self.supporters))
        if self.decided:
            if self.gold is None:
                raise ValueError("decided votes need a gold answer")
            counts = list(self.tally.values())
            if counts and self.tally[self.gold] < max(counts):
                raise ValueError("gold must hold the plurality")
        elif self.gold is not None or self.supporters:
            raise ValueError("undecided votes carry no gold or supporters")


_FENCE_RE = re.compile(r"```[ \t]*[\w+-]*[ \t]*\n(.*?)```", re.DOTALL)


def extract_program(completion: str) -> str:
    """Pull the program text out of a model completion.

    The first fenced code block wins, language tag or not. Without a
    fence the trimmed completion is used only if it parses as Python;
    prose such as "Sure! Here is:" carries no program.
    """
    m = _FENCE_RE.search(completion)
    if m:
        program = m.group(1).strip("\n")
        if not program.strip():
            raise NoProgram("fenced block is empty")
        return program
    program = completion.strip()
    if not program:
        raise NoProgram("completion is blank")
    try:
        compile(program, "<completion>", "exec")
    except SyntaxError:
        raise NoProgram("completion is not a runnable program") from None
    return program


def _drain(stream, buf: bytearray, cap: int) -> None:
    # Keep reading past the cap so the child never blocks on a full pipe.
    while True:
        chunk = stream.read(8192)
        if not chunk:
            return
        if len(buf) < cap:
            buf.extend(chunk[: cap - len(buf)])


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (OSError, AttributeError):
        proc.kill()


def execute(program: str, cfg: SandboxConfig) -> PoTCandidate:
    """Run one program in a fresh subprocess and parse its printed answer.

    Failures are encoded in exec_status, never raised: nonzero exit is
    runtime_error, overrunning time_limit is timeout (the whole process
    group is killed), empty or blank stdout is parse_failure. The program
    runs inside a throwaway directory with a scrubbed environment, and
    stdout is truncated at max_stdout bytes. The answer is the last
    non-empty stdout line.
    """
    with tempfile.TemporaryDirectory(prefix="fdd-pot-") as run_dir:
        prog_path = os.path.join(run_dir, "prog.py")
        with open(prog_path, "w", encoding="utf-8") as f:
            f.write(program)
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "HOME": run_dir,
            "LC_ALL": "C.UTF-8",
            "PYTHONIOENCODING": "utf-8",
            "PYTHONHASHSEED": "0",
            "FDD_MEM_LIMIT": str(cfg.memory_limit),
            "FDD_CPU_LIMIT": str(max(1, math.ceil(cfg.time_limit))),
        }
        proc = subprocess.Popen(
            [*cfg.interpreter_cmd, prog_path],
            cwd=run_dir,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            start_new_session=True,
        )
        buf = bytearray()
        reader = threading.Thread(target=_drain, args=(proc.stdout, buf, cfg.max_stdout))
        reader.start()
        timed_out = False
        try:
            proc.wait(timeout=cfg.time_limit)
        except subprocess.TimeoutExpired:
            timed_out = True
            _kill_group(proc)
            proc.wait()
        reader.join()
        proc.stdout.close()

    if timed_out:
        return PoTCandidate(program=program, exec_status="timeout")
    if proc.returncode != 0:
        return PoTCandidate(program=program, exec_status="runtime_error")
    stdout = bytes(buf).decode("utf-8", errors="replace")
    lines = [ln for ln in stdout.splitlines() if ln.strip()]
    if not lines:
        return PoTCandidate(program=program, exec_status="parse_failure")
    return PoTCandidate(
        program=program,
        exec_status="ok",
        extracted=normalize_answer(lines[-1]),
    )


def verify_against_gold(
    cand: PoTCandidate,
    gold: Answer,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-6,
) -> PoTCandidate:
    """Mark the candidate verified iff it ran ok and its answer matches gold."""
    ok = (
        cand.exec_status == "ok"
        and cand.extracted is not None
        and answers_match(cand.extracted, gold, rel_tol=rel_tol, abs_tol=abs_tol)
    )
    return replace(cand, verified=ok)


def vote_gold(
    cands: Sequence[PoTCandidate],
    tie_policy: str = "earliest",
    min_support: int = 1,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-6,
) -> VoteResult:
    """Pick the plurality answer among successful executions.

    Answers are grouped by tolerant equality; the earliest candidate in
    each group is its representative. A tied plurality goes to the group
    seen first under tie_policy "earliest", or leaves the vote undecided
    under "discard". Failed executions never count.
    """
    if not cands:
        raise ValueError("need at least one candidate")
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"unknown tie_policy {tie_policy!r}")
    if min_support < 1:
        raise ValueError("min_support must be >= 1")

    groups: list[tuple[Answer, list[PoTCandidate]]] = []
    for cand in cands:
        if cand.exec_status != "ok" or cand.extracted is None:
            continue
        for rep, members in groups:
            if answers_match(cand.extracted, rep, rel_tol=rel_tol, abs_tol=abs_tol):
                members.append(cand)
                break
        else:
            groups.append((cand.extracted, [cand]))

    tally = {rep: len(members) for rep, members in groups}
    if not groups:
        return VoteResult(gold=None, supporters=(), tally=tally, decided=False)
    best = max(tally.values())
    leaders = [(rep, members) for rep, members in groups if len(members) == best]
    if (len(leaders) > 1 and tie_policy == "discard") or best < min_support:
        return VoteResult(gold=None, supporters=(), tally=tally, decided=False)
    gold, supporters = leaders[0]
    return VoteResult(gold=gold, supporters=tuple(supporters), tally=tally, decided=True)


def generate_pots(
    question: Question,
    demos: DemoSet,
    n: int,
    teacher: ModelEndpoint,
    cfg: SandboxConfig,
    temperature: float = POT_TEMPERATURE,
    max_tokens: int = 1024,
) -> list[PoTCandidate]:
    """Sample n programs for the question and execute each one.

    Completions with no extractable program become parse_failure
    candidates, so callers always get n results back. Transport errors
    from the endpoint propagate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prompt = build_pot_prompt(question.text, demos)
    resp = gateway.generate(
        teacher,
        GenRequest(prompt=prompt, temperature=temperature, n_samples=n, max_tokens=max_tokens),
    )
    out: list[PoTCandidate] = []
    for completion in resp.completions[:n]:
        try:
            program = extract_program(completion)
        except NoProgram:
            placeholder = completion.strip() or "# empty completion"
            out.append(PoTCandidate(program=placeholder, exec_status="parse_failure"))
            continue
        out.append(execute(program, cfg))
    return out
