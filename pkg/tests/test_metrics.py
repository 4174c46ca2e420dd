import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signstream.metrics import (
    DEL,
    INS,
    SUB,
    bleu,
    corpus_rouge_l,
    corpus_wer,
    format_alignment,
    lcs_length,
    rouge_l,
    wer,
)

G = [f"g{i}" for i in range(10)]


# ------------------------------------------------------------------------ WER


def test_wer_one_deletion_in_six():
    ref = G[:6]
    hyp = ref[:1] + ref[2:]  # second gloss dropped
    score, alignment = wer(ref, hyp)
    assert score == pytest.approx(16.67, abs=0.005)
    assert (alignment.substitutions, alignment.deletions, alignment.insertions) == (0, 1, 0)


def test_wer_two_substitutions_in_six():
    ref = G[:6]
    hyp = ref[:4] + ["x1", "x2"]
    score, alignment = wer(ref, hyp)
    assert score == pytest.approx(33.33, abs=0.005)
    assert alignment.substitutions == 2


def test_wer_one_insertion_in_eight():
    ref = G[:8]
    hyp = ref[:4] + ["extra"] + ref[4:]
    score, alignment = wer(ref, hyp)
    assert score == pytest.approx(12.50, abs=0.005)
    assert alignment.insertions == 1


def test_wer_deletion_plus_insertion_in_eight():
    ref = G[:8]
    hyp = ref[:3] + ref[4:7] + ["extra"] + ref[7:]  # one gloss dropped, one added
    score, alignment = wer(ref, hyp)
    assert score == pytest.approx(25.00, abs=0.005)
    assert alignment.deletions == 1 and alignment.insertions == 1


def test_wer_three_substitutions_in_eight():
    ref = G[:8]
    hyp = ref[:2] + ["x1", "x2", "x3"] + ref[5:]
    score, _ = wer(ref, hyp)
    assert score == pytest.approx(37.50, abs=0.005)


def test_wer_one_deletion_in_five():
    ref = G[:5]
    score, _ = wer(ref, ref[:3] + ref[4:])
    assert score == pytest.approx(20.00, abs=0.005)


def test_wer_two_substitutions_in_five():
    ref = G[:5]
    score, _ = wer(ref, ref[:3] + ["x1", "x2"])
    assert score == pytest.approx(40.00, abs=0.005)


def test_wer_exact_match_is_zero():
    for n in (1, 4, 9):
        score, alignment = wer(G[:n], G[:n])
        assert score == 0.0
        assert alignment.matches == n


def test_wer_can_exceed_hundred():
    score, _ = wer(["a"], ["b", "c", "d"])
    assert score == pytest.approx(300.0)


def test_wer_empty_reference_rejected():
    with pytest.raises(ValueError):
        wer([], ["a"])


def test_wer_counts_satisfy_reference_identity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        ref = [G[i] for i in rng.integers(0, 5, size=rng.integers(1, 8))]
        hyp = [G[i] for i in rng.integers(0, 5, size=rng.integers(0, 8))]
        _, a = wer(ref, hyp)
        assert a.substitutions + a.deletions + a.matches == len(ref)


@lru_cache(maxsize=None)
def _recursive_distance(ref: tuple, hyp: tuple) -> int:
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        _recursive_distance(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
        _recursive_distance(ref[1:], hyp) + 1,
        _recursive_distance(ref, hyp[1:]) + 1,
    )


def test_dp_matches_recursive_oracle_exhaustively():
    # every sequence pair of length <= 6 over a 3-symbol alphabet
    alphabet = ("a", "b", "c")
    seqs = [()]
    for length in range(1, 7):
        seqs.extend(itertools.product(alphabet, repeat=length))
    refs = [s for s in seqs if s]
    for ref in refs:
        expected_row = [_recursive_distance(ref, hyp) for hyp in seqs]
        for hyp, expected in zip(seqs, expected_row):
            _, a = wer(ref, hyp)
            assert a.errors == expected, (ref, hyp)


def test_alignment_markers():
    _, a = wer(["a", "b", "c"], ["a", "x", "c", "y"])
    text = format_alignment(a)
    assert "[SUB:x]" in text and "[INS:y]" in text
    colored = format_alignment(a, color=True)
    assert "\x1b[31m" in colored


def test_backtrace_tag_preference():
    _, a = wer(["a"], ["a"])
    assert a.ops == [("match", "a", "a")]
    _, a = wer(["a"], ["b"])
    assert [t for t, _, _ in a.ops] == [SUB]
    _, a = wer(["a", "b"], ["a"])
    assert [t for t, _, _ in a.ops] == ["match", DEL]
    _, a = wer(["a"], ["a", "b"])
    assert [t for t, _, _ in a.ops] == ["match", INS]


def test_corpus_wer_pools_counts():
    refs = [["a", "b"], ["c", "d", "e"]]
    hyps = [["a", "b"], ["c", "x", "e"]]
    score, per_sample = corpus_wer(refs, hyps)
    assert score == pytest.approx(100.0 / 5)
    assert len(per_sample) == 2


# ----------------------------------------------------------------------- BLEU


def test_bleu_perfect_match():
    refs = [["a", "b", "c", "d", "e"]]
    scores = bleu(refs, refs)
    assert all(s == pytest.approx(100.0) for s in scores)


def test_bleu_no_overlap_is_zero():
    scores = bleu([["a", "b", "c", "d"]], [["x", "y", "z", "w"]], smooth=False)
    assert all(s == 0.0 for s in scores)


def test_bleu_hand_derived_unigram():
    scores = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]], smooth=False)
    assert scores[0] == pytest.approx(80.0, abs=1e-6)


def test_bleu_hand_derived_higher_orders():
    # hyp "a b c d e" vs ref "a b c d": p1=4/5, p2=3/4, p3=2/3, p4=1/2, BP=1
    scores = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]], smooth=False)
    assert scores[1] == pytest.approx(100.0 * (0.8 * 0.75) ** 0.5, abs=1e-6)
    assert scores[2] == pytest.approx(100.0 * (0.8 * 0.75 * (2 / 3)) ** (1 / 3), abs=1e-6)
    assert scores[3] == pytest.approx(100.0 * (0.8 * 0.75 * (2 / 3) * 0.5) ** 0.25, abs=1e-6)


def test_bleu_brevity_penalty():
    # hyp shorter than ref: BP = exp(1 - r/c) = exp(1 - 4/3)
    scores = bleu([["a", "b", "c", "d"]], [["a", "b", "c"]], smooth=False)
    assert scores[0] == pytest.approx(100.0 * np.exp(1 - 4 / 3), abs=1e-6)


def test_bleu_clipping():
    # "a a a" against ref with a single "a": clipped to 1/3; BP=1 since c > r
    scores = bleu([["a", "b"]], [["a", "a", "a"]], smooth=False)
    assert scores[0] == pytest.approx(100.0 / 3, abs=1e-6)


def test_bleu_smoothing_only_for_short_segments():
    # segment shorter than 4 tokens: add-one smoothing keeps B4 positive
    refs = [["a", "b", "c"]]
    hyps = [["a", "b", "c"]]
    smoothed = bleu(refs, hyps, smooth=True)
    assert smoothed[3] > 0.0
    assert bleu(refs, hyps, smooth=False)[3] == 0.0


def test_bleu_relabeling_invariance():
    rng = np.random.default_rng(1)
    refs = [[G[i] for i in rng.integers(0, 6, size=6)] for _ in range(4)]
    hyps = [[G[i] for i in rng.integers(0, 6, size=6)] for _ in range(4)]
    base = bleu(refs, hyps)
    mapping = {g: f"tok{i}" for i, g in enumerate(G)}
    relabeled = bleu(
        [[mapping[t] for t in r] for r in refs], [[mapping[t] for t in h] for h in hyps]
    )
    assert base == pytest.approx(relabeled)
    assert all(0.0 <= s <= 100.0 for s in base)


# -------------------------------------------------------------------- ROUGE-L


def test_rouge_identical():
    assert rouge_l(["a", "b", "c"], ["a", "b", "c"]) == pytest.approx(100.0)


def test_rouge_disjoint():
    assert rouge_l(["a", "b"], ["x", "y"]) == 0.0


def test_rouge_hand_derived():
    # LCS("a b c d", "a c d") = 3: R=0.75, P=1.0, F = 2RP/(R+P)
    val = rouge_l(["a", "b", "c", "d"], ["a", "c", "d"])
    assert val == pytest.approx(100.0 * 2 * 0.75 * 1.0 / 1.75, abs=1e-6)


def test_rouge_empty_conventions():
    assert rouge_l([], []) == 0.0
    assert rouge_l(["a"], []) == 0.0


@settings(max_examples=50, deadline=None)
@given(
    a=st.lists(st.sampled_from("abc"), max_size=8),
    b=st.lists(st.sampled_from("abc"), max_size=8),
)
def test_lcs_symmetry(a, b):
    assert lcs_length(a, b) == lcs_length(b, a)


def test_corpus_rouge_is_mean():
    refs = [["a", "b"], ["c", "d"]]
    hyps = [["a", "b"], ["x", "y"]]
    assert corpus_rouge_l(refs, hyps) == pytest.approx(50.0)
