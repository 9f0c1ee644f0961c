"""Shared hypothesis strategies for dataset records."""

from __future__ import annotations

from hypothesis import strategies as st

from fdd.data import (
    Answer,
    DistillationEntry,
    PoTCandidate,
    Question,
    ORIGINS,
)

# Text that survives a JSONL round trip unchanged: JSON strings are fine with
# any code point, but we exclude surrogates which json refuses to encode.
jsonl_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=80
)

finite_floats = st.floats(
    allow_nan=False, allow_infinity=False, min_value=-1e12, max_value=1e12
)


@st.composite
def answers(draw):
    kind = draw(st.sampled_from(["numeric", "textual"]))
    if kind == "numeric":
        val = draw(finite_floats)
        return Answer(kind="numeric", raw=repr(val), numeric_value=val)
    raw = draw(jsonl_text)
    return Answer(kind="textual", raw=raw, numeric_value=None)


@st.composite
def questions(draw, round_no=None):
    origin = draw(st.sampled_from(ORIGINS))
    rnd = draw(st.integers(min_value=0, max_value=5)) if round_no is None else round_no
    if origin == "initial":
        parent = None
        rnd = 0
    else:
        parent = draw(st.text(alphabet="abcdef0123456789", min_size=4, max_size=8))
        rnd = max(rnd, 1)
    return Question(
        id=draw(st.uuids()).hex,
        text=draw(jsonl_text.filter(lambda s: s.strip())),
        gold=draw(st.one_of(st.none(), answers())),
        origin=origin,
        parent_id=parent,
        round=rnd,
    )


@st.composite
def verified_pots(draw):
    # verified candidates always carry an extracted answer
    return PoTCandidate(
        program=draw(jsonl_text),
        exec_status="ok",
        extracted=draw(answers()),
        verified=True,
    )


@st.composite
def entries(draw):
    q = draw(questions())
    q = q.with_gold(draw(answers()))
    pots = draw(st.lists(verified_pots(), min_size=1, max_size=4))
    return DistillationEntry(question=q, pots=tuple(pots))
