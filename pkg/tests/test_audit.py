import csv
import json
import math
import os
import random
import subprocess
import sys

import numpy as np
import pytest

import oracles
from fdd import audit
from fdd import _rougepy
from fdd.data import Question, RoundState, save_state, state_path
from fdd.audit import (
    EmptySet,
    MissingState,
    SimilarityReport,
    audit_rounds,
    dataset_similarity,
    kernel_name,
    load_round_states,
    rouge_l,
    write_audit_reports,
)

VOCAB = ["cat", "dog", "mat", "sat", "the", "on", "ran", "a", "big", "red"]


def random_text(rng, max_len=20):
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(0, max_len)))


# ------------------------------------------------------------ fixed cases


def test_rouge_identical():
    assert rouge_l("the cat sat", "the cat sat") == pytest.approx(1.0)


def test_rouge_disjoint():
    assert rouge_l("aa bb cc", "dd ee ff") == 0.0


def test_rouge_cat_mat():
    got = rouge_l("The cat sat on the mat", "The cat on the mat")
    assert got == pytest.approx(10 / 11, abs=1e-12)


def test_rouge_empty_sides():
    assert rouge_l("", "the cat") == 0.0
    assert rouge_l("the cat", "") == 0.0
    assert rouge_l("", "") == 0.0


def test_rouge_case_and_whitespace_insensitive():
    assert rouge_l("The  CAT", "the cat") == pytest.approx(1.0)


def test_rouge_symmetric_random():
    rng = random.Random(5)
    for _ in range(50):
        a, b = random_text(rng), random_text(rng)
        assert rouge_l(a, b) == pytest.approx(rouge_l(b, a), abs=1e-12)


def test_rouge_matches_oracle_sample():
    rng = random.Random(11)
    for _ in range(50):
        a, b = random_text(rng), random_text(rng)
        assert rouge_l(a, b) == pytest.approx(oracles.rouge_l_text(a, b), abs=1e-9)


# ---------------------------------------------------------------- kernels


def _pack_docs(docs):
    off = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, d in enumerate(docs):
        off[i + 1] = off[i] + len(d)
    flat = np.array([t for d in docs for t in d] or [0], dtype=np.intc)[: int(off[-1])]
    return np.ascontiguousarray(flat), off


def test_compiled_and_python_kernels_agree():
    core = pytest.importorskip("fdd._rougecore")
    rng = random.Random(23)
    gen = [[rng.randint(0, 30) for _ in range(rng.randint(0, 25))] for _ in range(12)]
    test = [[rng.randint(0, 30) for _ in range(rng.randint(0, 25))] for _ in range(9)]
    gf, go = _pack_docs(gen)
    tf, to = _pack_docs(test)
    fast = np.asarray(core.pair_scores(gf, go, tf, to))
    slow = np.asarray(_rougepy.pair_scores(gf, go, tf, to))
    assert fast.shape == (12, 9)
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_pure_python_override_env():
    code = "import fdd.audit as a; print(a.kernel_name())"
    env = dict(os.environ, FDD_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"
    assert kernel_name() in ("compiled", "python")


# ----------------------------------------------------------- similarity


def q(qid, text, origin="initial", parent=None, round_no=0):
    return Question(id=qid, text=text, gold=None, origin=origin, parent_id=parent, round=round_no)


def test_similarity_full_fraction_matches_oracle_mean():
    gen = ["the cat sat on the mat", "a big red dog", "dog ran"]
    test = ["the cat on the mat", "a red dog ran"]
    rep = dataset_similarity(gen, test, fraction=1.0, seed=0)
    assert rep.m == 3 and rep.n == 2
    assert rep.mean_rouge_l == pytest.approx(oracles.mean_pairwise(gen, test), abs=1e-9)
    scores = sorted(oracles.rouge_l_text(a, b) for a in gen for b in test)
    assert rep.p50 == pytest.approx(float(np.percentile(scores, 50)), abs=1e-9)
    assert rep.p95 == pytest.approx(float(np.percentile(scores, 95)), abs=1e-9)
    assert sum(rep.histogram) == 6


def test_similarity_identity_singleton():
    rep = dataset_similarity(["same text"], ["same text"], fraction=1.0)
    assert rep.mean_rouge_l == pytest.approx(1.0)


def test_similarity_disjoint_vocab():
    rep = dataset_similarity(["aa bb"], ["cc dd"], fraction=1.0)
    assert rep.mean_rouge_l == 0.0


def test_similarity_sample_size_is_ceil():
    gen = [f"text number {i}" for i in range(100)]
    rep = dataset_similarity(gen, ["text"], fraction=0.3)
    assert rep.m == 30
    rep = dataset_similarity(gen[:7], ["text"], fraction=0.3)
    assert rep.m == math.ceil(0.3 * 7)


def test_similarity_deterministic_per_seed_and_key():
    rng = random.Random(3)
    gen = [random_text(rng, 12) or "pad" for _ in range(40)]
    test = [random_text(rng, 12) or "pad" for _ in range(5)]
    a = dataset_similarity(gen, test, fraction=0.3, seed=1, sample_key="r1")
    b = dataset_similarity(gen, test, fraction=0.3, seed=1, sample_key="r1")
    assert a == b
    c = dataset_similarity(gen, test, fraction=0.3, seed=2, sample_key="r1")
    assert c.rng_seed == 2  # the sampled subset may or may not coincide


def test_similarity_accepts_questions():
    gen = [q("a", "the cat sat")]
    test = [q("b", "the cat sat")]
    rep = dataset_similarity(gen, test, fraction=1.0)
    assert rep.mean_rouge_l == pytest.approx(1.0)


def test_similarity_rejects_empty_and_bad_fraction():
    with pytest.raises(EmptySet):
        dataset_similarity([], ["x"], fraction=1.0)
    with pytest.raises(EmptySet):
        dataset_similarity(["x"], [], fraction=1.0)
    with pytest.raises(ValueError):
        dataset_similarity(["x"], ["y"], fraction=0.0)
    with pytest.raises(ValueError):
        dataset_similarity(["x"], ["y"], fraction=1.5)


def test_report_validation():
    with pytest.raises(ValueError):
        SimilarityReport(
            generated_set="g", test_set="t", m=0, n=1, mean_rouge_l=0.5,
            p50=0.5, p95=0.5, histogram=(0,) * 10, sample_fraction=1.0, rng_seed=0,
        )


# ------------------------------------------------------------ run audits


def _states_and_questions():
    qs = {}
    for qid, text in [("s1", "seed one text"), ("s2", "seed two text")]:
        qs[qid] = q(qid, text)
    qs["g1"] = q("g1", "the cat sat on the mat", origin="complex_gen", parent="s1", round_no=1)
    qs["g2"] = q("g2", "a big red dog ran", origin="diverse_gen", parent="s2", round_no=1)
    qs["g3"] = q("g3", "the dog sat on a mat", origin="complex_gen", parent="s1", round_no=2)
    states = [
        RoundState(round=0, seed_pool={"s1", "s2"}),
        RoundState(round=1, seed_pool={"s2", "g1", "g2"}, easy_pool={"s1"},
                   hard_pool={"s2"}, generated={"g1", "g2"}),
        RoundState(round=2, seed_pool={"s2", "g3"}, easy_pool={"g1", "g2"},
                   hard_pool={"s2"}, generated={"g3"}),
    ]
    return states, qs


def test_audit_rounds_row_counts():
    states, qs = _states_and_questions()
    test_sets = {"alpha": ["the cat on the mat"], "beta": ["a red dog ran"]}
    rows = audit_rounds(states, qs, test_sets, fraction=1.0, seed=0)
    # round 0 generates nothing; round 1 both strategies; round 2 complex only
    keys = [(r.round, r.strategy, r.report.test_set) for r in rows]
    assert keys == [
        (1, "complex_gen", "alpha"),
        (1, "complex_gen", "beta"),
        (1, "diverse_gen", "alpha"),
        (1, "diverse_gen", "beta"),
        (2, "complex_gen", "alpha"),
        (2, "complex_gen", "beta"),
    ]
    row = rows[0]
    assert row.report.mean_rouge_l == pytest.approx(
        oracles.rouge_l_text("the cat sat on the mat", "the cat on the mat"), abs=1e-9
    )


def test_audit_rounds_deterministic():
    states, qs = _states_and_questions()
    test_sets = {"alpha": ["the cat on the mat"]}
    a = audit_rounds(states, qs, test_sets, fraction=0.5, seed=9)
    b = audit_rounds(states, qs, test_sets, fraction=0.5, seed=9)
    assert a == b


def test_write_audit_reports(tmp_path):
    states, qs = _states_and_questions()
    rows = audit_rounds(states, qs, {"alpha": ["the cat on the mat"]}, fraction=1.0)
    jp, cp = tmp_path / "r.json", tmp_path / "r.csv"
    write_audit_reports(rows, jp, cp)
    loaded = json.loads(jp.read_text())
    assert len(loaded) == len(rows)
    assert loaded[0]["strategy"] == "complex_gen"
    with open(cp, newline="") as f:
        got = list(csv.reader(f))
    assert got[0] == list(audit.CSV_COLUMNS)
    assert len(got) == len(rows) + 1
    assert got[1][0] == "1" and got[1][1] == "complex_gen"
    float(got[1][5])  # mean column parses as a number


def test_load_round_states(tmp_path):
    for r in (2, 0, 1):
        save_state(RoundState(round=r, seed_pool={f"q{r}"}), state_path(tmp_path, r))
    (tmp_path / "round_x.state.json").write_text("{}")  # ignored: not a round number
    states = load_round_states(tmp_path)
    assert [s.round for s in states] == [0, 1, 2]


def test_load_round_states_missing(tmp_path):
    with pytest.raises(MissingState):
        load_round_states(tmp_path)


def test_audit_row_to_dict_merges_report():
    states, qs = _states_and_questions()
    rows = audit_rounds(states, qs, {"alpha": ["the cat"]}, fraction=1.0)
    d = rows[0].to_dict()
    assert d["round"] == 1
    assert "mean_rouge_l" in d and "histogram" in d
