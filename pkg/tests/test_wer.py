import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus_forge.errors import EmptyReference
from corpus_forge.normalize import DEFAULT_CONFIG, tokenize
from corpus_forge.wer import ScoreRecord, aggregate, align, percent, wer

import oracles

EXAMPLE_REF = "no i don't hear anything when the candle burns"
EXAMPLE_HYP = "no i don't hearing even a candle burns"
NO_EXPANSION = DEFAULT_CONFIG.replace(contraction_table={}, suffix_rules=())


def check_invariants(ref, hyp, a):
    kinds = [op.kind for op in a.ops]
    m = kinds.count("=")
    assert a.substitutions == kinds.count("S")
    assert a.deletions == kinds.count("D")
    assert a.insertions == kinds.count("I")
    assert a.substitutions + a.deletions + m == len(ref) == a.ref_len
    assert a.substitutions + a.insertions + m == len(hyp)
    assert [op.ref for op in a.ops if op.ref is not None] == list(ref)
    assert [op.hyp for op in a.ops if op.hyp is not None] == list(hyp)
    for op in a.ops:
        if op.kind == "=":
            assert op.ref == op.hyp
        if op.kind == "S":
            assert op.ref != op.hyp


def test_identical():
    a = align(["a", "b", "c"], ["a", "b", "c"])
    assert [op.kind for op in a.ops] == ["="] * 3
    assert (a.substitutions, a.deletions, a.insertions) == (0, 0, 0)


def test_single_deletion():
    a = align(["a"], [])
    assert [op.kind for op in a.ops] == ["D"]
    assert a.deletions == 1


def test_empty_both():
    a = align([], [])
    assert a.ops == () and a.edits == 0


def test_mistranscription_pair_tokens():
    ref, hyp = tokenize(EXAMPLE_REF), tokenize(EXAMPLE_HYP)
    assert oracles.edit_distance_uncached(ref, hyp) == 4
    a = align(ref, hyp)
    assert (a.substitutions, a.deletions, a.insertions, a.ref_len) == (3, 1, 0, 9)
    assert tuple(op.kind for op in a.ops) == oracles.preferred_alignment(ref, hyp)


def test_mistranscription_pair_wer_without_expansion():
    s = wer("No, I don't hear anything when the candle burns.",
            "No, I don't hearing even a candle burns.", NO_EXPANSION)
    assert s.wer == Fraction(4, 9)


def test_mistranscription_pair_wer_default_expands_dont():
    # "don't" -> "do not" adds one matched reference token
    s = wer("No, I don't hear anything when the candle burns.",
            "No, I don't hearing even a candle burns.")
    assert (s.substitutions, s.deletions, s.insertions, s.ref_len) == (3, 1, 0, 10)


def test_wer_identical_and_empty():
    assert wer("Hello there.", "hello there").wer == 0
    with pytest.raises(EmptyReference):
        wer("[noise]", "hello")
    with pytest.raises(EmptyReference):
        wer("um uh", "hello")


def test_wer_can_exceed_one():
    assert wer("a", "b c d").wer == 3


def test_tie_break_prefers_front_substitution():
    a = align(["x", "y"], ["z"])
    assert [op.kind for op in a.ops] == ["S", "D"]
    a = align(["z"], ["x", "y"])
    assert [op.kind for op in a.ops] == ["S", "I"]


def test_oracle_exhaustive_small():
    for n in range(5):
        for m in range(5):
            for ref in itertools.product("ab", repeat=n):
                for hyp in itertools.product("ab", repeat=m):
                    a = align(ref, hyp)
                    assert a.edits == oracles.edit_distance(ref, hyp)
                    check_invariants(ref, hyp, a)


def test_preferred_alignment_matches_oracle():
    rng = random.Random(7)
    for _ in range(150):
        ref = [rng.choice("abc") for _ in range(rng.randint(0, 6))]
        hyp = [rng.choice("abc") for _ in range(rng.randint(0, 6))]
        assert tuple(op.kind for op in align(ref, hyp).ops) == oracles.preferred_alignment(ref, hyp)


tokens = st.lists(st.sampled_from("abcde"), max_size=12)


@settings(max_examples=300)
@given(tokens, tokens)
def test_swap_symmetry(ref, hyp):
    a, b = align(ref, hyp), align(hyp, ref)
    assert a.edits == b.edits
    assert a.substitutions + a.deletions + a.insertions == b.substitutions + b.insertions + b.deletions


@settings(max_examples=300)
@given(tokens, tokens)
def test_swap_exchanges_deletions_and_insertions(ref, hyp):
    a, b = align(ref, hyp), align(hyp, ref)
    # with equal edit totals, D - I flips sign when the roles swap
    assert a.deletions - a.insertions == -(b.deletions - b.insertions) == len(ref) - len(hyp)


@settings(max_examples=300)
@given(tokens, tokens, tokens)
def test_triangle(x, y, z):
    assert align(x, z).edits <= align(x, y).edits + align(y, z).edits


def test_aggregate_micro():
    scores = [ScoreRecord("a", 1, 0, 0, 10), ScoreRecord("b", 2, 1, 0, 10)]
    assert aggregate(scores) == Fraction(1, 5)
    assert aggregate(scores[:1]) == scores[0].wer


def test_aggregate_five_file_fixture():
    # hand-set edits / lengths: 2/10, 0/8, 5/10, 1/4, 0/8 -> 8/40
    scores = [ScoreRecord(str(i), e, 0, 0, n) for i, (e, n) in enumerate([(2, 10), (0, 8), (5, 10), (1, 4), (0, 8)])]
    assert aggregate(scores) == Fraction(8, 40) == Fraction(1, 5)


def test_aggregate_macro():
    scores = [ScoreRecord("a", 1, 0, 0, 2), ScoreRecord("b", 0, 0, 0, 10)]
    assert aggregate(scores, macro=True) == Fraction(1, 4)


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


@pytest.mark.parametrize(
    "value, digits, text",
    [(Fraction(4, 9), 2, "44.44"), (Fraction(1, 200), 1, "0.5"), (Fraction(1, 8), 1, "12.5"),
     (Fraction(2, 3), 1, "66.7"), (Fraction(0), 2, "0.00"), (Fraction(3), 1, "300.0"),
     (Fraction(1, 2000), 1, "0.1")],
)
def test_percent(value, digits, text):
    assert percent(value, digits) == text


def test_score_json():
    assert ScoreRecord("u1", 3, 1, 0, 9).to_json() == {
        "utterance_id": "u1", "substitutions": 3, "deletions": 1, "insertions": 0,
        "ref_len": 9, "wer_percent": "44.44",
    }
