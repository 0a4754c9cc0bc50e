"""Reporting: cascade tables, dataset hour accounting, alignment displays and
filler retention."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .normalize import DEFAULT_CONFIG, NormalizerConfig, normalize, tokenize
from .records import SPLITS, UtteranceRecord
from .wer import DEL, INS, MATCH, SUB, Alignment, align, percent


@dataclass(frozen=True)
class CascadeRow:
    """Remaining data in one split after ``stage`` filters have run.

    ``stage`` 0 is the unfiltered corpus. ``wer`` is None when no scorable
    record remains.
    """

    stage: int
    stage_label: str
    split: str
    hours: float
    wer: Fraction | None

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "stage_label": self.stage_label,
            "split": self.split,
            "hours": self.hours,
            "wer_percent": None if self.wer is None else percent(self.wer, 2),
        }


def _split_order(split: str) -> int:
    return SPLITS.index(split) if split in SPLITS else len(SPLITS)


def hours_of(records: Iterable[UtteranceRecord]) -> float:
    return math.fsum(r.duration_s for r in records) / 3600


@dataclass(frozen=True)
class AccountingRow:
    corpus: str
    split: str
    hours: float

    def to_json(self) -> dict:
        return {"corpus": self.corpus, "split": self.split, "hours": round(self.hours, 1)}


def dataset_accounting(manifests: Mapping[str, Iterable[UtteranceRecord]]) -> list[AccountingRow]:
    """Hours per (corpus, split). train/dev/test rows are always present."""
    rows = []
    for corpus in manifests:
        records = list(manifests[corpus])
        splits = ["train", "dev", "test"]
        if any(r.split == "unassigned" for r in records):
            splits.append("unassigned")
        for split in splits:
            rows.append(AccountingRow(corpus, split, hours_of(r for r in records if r.split == split)))
    return rows


def render_accounting(rows: Sequence[AccountingRow]) -> str:
    if not rows:
        return ""
    table = [("corpus", "split", "hours")]
    table += [(r.corpus, r.split, f"{r.hours:.1f}") for r in rows]
    return _format_table(table, right_align_from=2)


def _format_table(table: list[tuple[str, ...]], right_align_from: int = 1) -> str:
    widths = [max(len(row[c]) for row in table) for c in range(len(table[0]))]
    lines = []
    for row in table:
        cells = [
            cell.rjust(w) if c >= right_align_from else cell.ljust(w)
            for c, (cell, w) in enumerate(zip(row, widths))
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def cascade_cell(row: CascadeRow) -> str:
    wer = "-" if row.wer is None else percent(row.wer, 1)
    return f"{wer} ({row.hours:.1f})"


def render_cascade(rows: Sequence[CascadeRow]) -> tuple[str, list[dict]]:
    """Cascade table text (one line per stage, "wer (hours)" per split) plus
    the same data as structured records."""
    if not rows:
        return "", []
    rows = sorted(rows, key=lambda r: (r.stage, _split_order(r.split)))
    splits = sorted({r.split for r in rows}, key=_split_order)
    stages: dict[int, str] = {}
    cells: dict[tuple[int, str], str] = {}
    for r in rows:
        stages.setdefault(r.stage, r.stage_label)
        cells[(r.stage, r.split)] = cascade_cell(r)
    table = [("stage", *splits)]
    for stage, label in stages.items():
        table.append((label, *(cells.get((stage, s), "") for s in splits)))
    return _format_table(table), [r.to_json() for r in rows]


def alignment_report(ref_text: str, hyp_text: str, cfg: NormalizerConfig = DEFAULT_CONFIG) -> str:
    """Three lines (REF / OPS / HYP) with one padded column per alignment op."""
    a = align(tokenize(normalize(ref_text, cfg)), tokenize(normalize(hyp_text, cfg)))
    return format_alignment(a)


def format_alignment(a: Alignment) -> str:
    ref_cells, op_cells, hyp_cells = ["REF:"], ["OPS:"], ["HYP:"]
    for op in a.ops:
        r = op.ref if op.ref is not None else "*" * len(op.hyp)
        h = op.hyp if op.hyp is not None else "*" * len(op.ref)
        w = max(len(r), len(h), 1)
        ref_cells.append(r.ljust(w))
        op_cells.append(op.kind.ljust(w))
        hyp_cells.append(h.ljust(w))
    return "\n".join(" ".join(cells).rstrip() for cells in (ref_cells, op_cells, hyp_cells))


def marker_counts(report: str) -> dict[str, int]:
    ops_line = report.split("\n")[1].split()[1:]
    return {k: ops_line.count(k) for k in (MATCH, SUB, DEL, INS)}


@dataclass(frozen=True)
class FillerRetention:
    ref_filler_count: int
    matched_filler_count: int
    family_match_count: int

    @property
    def retention(self) -> Fraction | None:
        """matched / ref; None (not applicable) when the references hold no fillers."""
        if self.ref_filler_count == 0:
            return None
        return Fraction(self.matched_filler_count, self.ref_filler_count)

    @property
    def family_retention(self) -> Fraction | None:
        if self.ref_filler_count == 0:
            return None
        return Fraction(self.family_match_count, self.ref_filler_count)

    def to_json(self) -> dict:
        def pct(x):
            return None if x is None else percent(x, 2)

        return {
            "ref_filler_count": self.ref_filler_count,
            "matched_filler_count": self.matched_filler_count,
            "family_match_count": self.family_match_count,
            "retention_percent": pct(self.retention),
            "family_retention_percent": pct(self.family_retention),
        }


def filler_retention(pairs: Iterable[tuple[str, str]],
                     cfg: NormalizerConfig = DEFAULT_CONFIG.replace(remove_fillers=False)) -> FillerRetention:
    """How many reference fillers survive in the hypotheses.

    Strict count: the filler is aligned as a match. Family count: it is
    aligned to any filler token (um vs uhm still counts).
    """
    if cfg.remove_fillers:
        raise ValueError("filler retention needs a config with remove_fillers off")
    fillers = cfg.filler_set
    total = matched = family = 0
    for ref_text, hyp_text in pairs:
        a = align(tokenize(normalize(ref_text, cfg)), tokenize(normalize(hyp_text, cfg)))
        for op in a.ops:
            if op.ref is None or op.ref not in fillers:
                continue
            total += 1
            if op.kind == MATCH:
                matched += 1
            if op.hyp is not None and op.hyp in fillers:
                family += 1
    return FillerRetention(total, matched, family)
