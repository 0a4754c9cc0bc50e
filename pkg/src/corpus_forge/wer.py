"""Word-level Levenshtein alignment and WER aggregation.

WER values are kept as :class:`fractions.Fraction` so corpus numbers do not
depend on float summation order; they become percentages only when rendered.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

from .errors import EmptyReference
from .normalize import DEFAULT_CONFIG, NormalizerConfig, normalize, tokenize

MATCH = "="
SUB = "S"
DEL = "D"
INS = "I"


class Op(NamedTuple):
    kind: str  # one of MATCH, SUB, DEL, INS
    ref: str | None
    hyp: str | None


@dataclass(frozen=True)
class Alignment:
    ops: tuple[Op, ...]
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def matches(self) -> int:
        return self.ref_len - self.substitutions - self.deletions

    @property
    def edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass(frozen=True)
class ScoreRecord:
    utterance_id: str
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> Fraction:
        return Fraction(self.edits, self.ref_len)

    def to_json(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
            "wer_percent": percent(self.wer, 2),
        }


def percent(value: Fraction, digits: int) -> str:
    """Render a fraction as a percentage string, rounding half away from zero."""
    scaled = value * 100 * 10**digits
    q, r = divmod(scaled.numerator, scaled.denominator)
    if 2 * r >= scaled.denominator:
        q += 1
    whole, frac = divmod(q, 10**digits)
    return f"{whole}.{frac:0{digits}d}" if digits else str(whole)


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    """Minimal unit-cost alignment of two token sequences.

    Costs are tabulated over suffixes and the path is read front to back;
    at each step the first optimal move in the order match, substitute,
    delete, insert is taken, so ties resolve toward the start of the
    sequences.
    """
    n, m = len(ref), len(hyp)
    # cost[i][j] = edit distance between ref[i:] and hyp[j:]
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        cost[n][j] = m - j
    for i in range(n - 1, -1, -1):
        row, below = cost[i], cost[i + 1]
        row[m] = n - i
        r = ref[i]
        for j in range(m - 1, -1, -1):
            diag = below[j + 1] + (r != hyp[j])
            dele = below[j] + 1
            ins = row[j + 1] + 1
            row[j] = min(diag, dele, ins)

    ops = []
    s = d = k = 0
    i = j = 0
    while i < n or j < m:
        here = cost[i][j]
        if i < n and j < m and here == cost[i + 1][j + 1] + (ref[i] != hyp[j]):
            if ref[i] == hyp[j]:
                ops.append(Op(MATCH, ref[i], hyp[j]))
            else:
                ops.append(Op(SUB, ref[i], hyp[j]))
                s += 1
            i += 1
            j += 1
        elif i < n and here == cost[i + 1][j] + 1:
            ops.append(Op(DEL, ref[i], None))
            d += 1
            i += 1
        else:
            ops.append(Op(INS, None, hyp[j]))
            k += 1
            j += 1
    return Alignment(tuple(ops), s, d, k, n)


def align_texts(ref_text: str, hyp_text: str,
                cfg: NormalizerConfig = DEFAULT_CONFIG) -> Alignment:
    return align(tokenize(normalize(ref_text, cfg)), tokenize(normalize(hyp_text, cfg)))


def wer(ref_text: str, hyp_text: str, cfg: NormalizerConfig = DEFAULT_CONFIG,
        utterance_id: str = "") -> ScoreRecord:
    ref = tokenize(normalize(ref_text, cfg))
    if not ref:
        raise EmptyReference(f"reference {utterance_id or ref_text!r} normalizes to nothing")
    a = align(ref, tokenize(normalize(hyp_text, cfg)))
    return ScoreRecord(utterance_id, a.substitutions, a.deletions, a.insertions, a.ref_len)


def aggregate(scores: Iterable[ScoreRecord], macro: bool = False) -> Fraction:
    """Corpus WER: total edits over total reference words (or mean per-file WER)."""
    scores = list(scores)
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    if macro:
        return sum((s.wer for s in scores), Fraction(0)) / len(scores)
    return Fraction(sum(s.edits for s in scores), sum(s.ref_len for s in scores))
