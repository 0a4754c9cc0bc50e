"""Filtering cascade, session packing, split assignment and split hygiene."""

from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .analysis import CascadeRow, hours_of
from .audio import chunk_filename, concat
from .errors import AudioError, CorpusForgeError, EmptyReference, MissingHypotheses
from .normalize import DEFAULT_CONFIG, NormalizerConfig, normalize
from .records import SPLITS, Manifest, UtteranceRecord, write_jsonl
from .wer import ScoreRecord, aggregate, wer

NO_SPEECH_LABELS = frozenset({"<DISCARD>", "<NO_SIGNAL>", "<SILENCE>"})

STAGE_NO_SPEECH, STAGE_WER, STAGE_WORDS, STAGE_DURATION = range(4)
REASONS = ("no_speech_label", "high_wer", "too_short", "too_long")


@dataclass(frozen=True)
class FilterPolicy:
    wer_threshold: Fraction = Fraction(1, 2)
    min_words: int = 3
    no_speech_labels: frozenset = NO_SPEECH_LABELS
    max_duration_s: float = 30.0
    duration_filtered_splits: frozenset = frozenset({"train", "dev"})

    def __post_init__(self):
        threshold = Fraction(str(self.wer_threshold)) if isinstance(self.wer_threshold, float) \
            else Fraction(self.wer_threshold)
        if threshold <= 0:
            raise ValueError("wer_threshold must be positive")
        if self.min_words < 1:
            raise ValueError("min_words must be at least 1")
        if not self.max_duration_s > 0:
            raise ValueError("max_duration_s must be positive")
        object.__setattr__(self, "wer_threshold", threshold)
        object.__setattr__(self, "no_speech_labels", frozenset(self.no_speech_labels))
        object.__setattr__(self, "duration_filtered_splits", frozenset(self.duration_filtered_splits))

    def stage_labels(self) -> tuple[str, ...]:
        pct = f"{float(self.wer_threshold) * 100:g}%"
        return (
            "all files",
            "removing no-speech labels",
            f"removing WER > {pct}",
            f"removing WER > {pct} or < {self.min_words} words",
            f"removing WER > {pct} or < {self.min_words} words or > {self.max_duration_s:g} s",
        )


@dataclass(frozen=True)
class FilterDecision:
    utterance_id: str
    verdict: str  # keep | remove
    reason: str  # one of REASONS or "kept"
    stage: int | None  # filter index that removed the record; None when kept

    def to_json(self) -> dict:
        return {"utterance_id": self.utterance_id, "verdict": self.verdict,
                "reason": self.reason, "stage": self.stage}


@dataclass
class CascadeResult:
    manifest: Manifest
    decisions: list[FilterDecision]
    rows: list[CascadeRow]
    scores: dict[str, ScoreRecord] = field(default_factory=dict)


def is_no_speech(record: UtteranceRecord, labels=NO_SPEECH_LABELS) -> bool:
    return record.raw_transcript.strip() in labels


def _score_one(args) -> ScoreRecord | None:
    uid, ref, hyp, cfg = args
    try:
        return wer(ref, hyp, cfg, utterance_id=uid)
    except EmptyReference:
        return None


def score_records(records: Sequence[UtteranceRecord], hypotheses: Mapping[str, str],
                  cfg: NormalizerConfig = DEFAULT_CONFIG, jobs: int = 1) -> dict[str, ScoreRecord]:
    """Per-record scores keyed by id; unscorable (empty reference) records are left out.

    Raises MissingHypotheses if any record lacks a hypothesis.
    """
    missing = [r.id for r in records if r.id not in hypotheses]
    if missing:
        raise MissingHypotheses(missing)
    work = [(r.id, r.raw_transcript, hypotheses[r.id], cfg) for r in records]
    if jobs > 1 and len(work) >= 2000:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_one, work, chunksize=max(1, len(work) // (jobs * 4))))
    else:
        results = [_score_one(w) for w in work]
    return {s.utterance_id: s for s in results if s is not None}


def _rows_for(stage: int, label: str, records: Sequence[UtteranceRecord],
              scores: Mapping[str, ScoreRecord], splits: Sequence[str],
              no_speech: frozenset) -> list[CascadeRow]:
    rows = []
    for split in splits:
        members = [r for r in records if r.split == split]
        scored = [scores[r.id] for r in members
                  if r.id in scores and r.raw_transcript.strip() not in no_speech]
        rows.append(CascadeRow(stage, label, split, hours_of(members),
                               aggregate(scored) if scored else None))
    return rows


def run_cascade(manifest: Manifest, hypotheses: Mapping[str, str],
                policy: FilterPolicy = FilterPolicy(),
                cfg: NormalizerConfig = DEFAULT_CONFIG, jobs: int = 1) -> CascadeResult:
    """Apply the filters in order: no-speech label, WER, word count, duration.

    Rows are emitted for the unfiltered corpus (stage 0) and after each
    filter (stages 1-4). WER in a row is the micro-average over remaining
    records that have a non-empty normalized reference.
    """
    records = list(manifest)
    if not records:
        return CascadeResult(manifest, [], [], {})
    splits = sorted({r.split for r in records}, key=SPLITS.index)
    labels = policy.stage_labels()
    no_speech = policy.no_speech_labels

    speech = [r for r in records if r.raw_transcript.strip() not in no_speech]
    scores = score_records(speech, hypotheses, cfg, jobs)

    removed: dict[str, tuple[int, str]] = {}
    rows = _rows_for(0, labels[0], records, scores, splits, no_speech)

    tests: list[Callable[[UtteranceRecord], bool]] = [
        lambda r: r.raw_transcript.strip() in no_speech,
        lambda r: r.id in scores and scores[r.id].wer > policy.wer_threshold,
        lambda r: len(r.raw_transcript.split()) < policy.min_words,
        lambda r: r.duration_s > policy.max_duration_s and r.split in policy.duration_filtered_splits,
    ]
    remaining = records
    for stage, test in enumerate(tests):
        keep = []
        for r in remaining:
            if test(r):
                removed[r.id] = (stage, REASONS[stage])
            else:
                keep.append(r)
        remaining = keep
        rows += _rows_for(stage + 1, labels[stage + 1], remaining, scores, splits, no_speech)

    decisions = []
    for r in records:
        if r.id in removed:
            stage, reason = removed[r.id]
            decisions.append(FilterDecision(r.id, "remove", reason, stage))
        else:
            decisions.append(FilterDecision(r.id, "keep", "kept", None))
    return CascadeResult(manifest.with_records(remaining), decisions, rows, scores)


# ---------------------------------------------------------------------------
# packing


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    session_id: str
    split: str
    member_ids: tuple[str, ...]
    total_duration_s: float
    combined_transcript: str
    audio_path: str
    flags: frozenset = frozenset()

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "session_id": self.session_id,
            "split": self.split,
            "member_ids": list(self.member_ids),
            "total_duration_s": self.total_duration_s,
            "combined_transcript": self.combined_transcript,
            "audio_path": self.audio_path,
            "flags": sorted(self.flags),
        }


def _greedy_groups(records: Sequence[UtteranceRecord], max_duration_s: float):
    group: list[UtteranceRecord] = []
    durations: list[float] = []
    for r in records:
        if group and math.fsum(durations + [r.duration_s]) <= max_duration_s:
            group.append(r)
            durations.append(r.duration_s)
            continue
        if group:
            yield group
        group, durations = [r], [r.duration_s]
    if group:
        yield group


def pack_sessions(records: Iterable[UtteranceRecord], max_duration_s: float = 30.0,
                  audio_dir="chunks", cfg: NormalizerConfig = DEFAULT_CONFIG,
                  pack_splits: Iterable[str] | None = None) -> list[Chunk]:
    """Greedy in-order packing of each (session, split) into chunks of at most
    ``max_duration_s``.

    Records in splits outside ``pack_splits`` (default: all) become one chunk
    each. A single record longer than the bound becomes a flagged singleton.
    Chunks are numbered per session, in split order then member order.
    """
    packable = None if pack_splits is None else frozenset(pack_splits)
    by_session: dict[str, dict[str, list[UtteranceRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in sorted(records, key=lambda r: r.id):
        by_session[r.session_id][r.split].append(r)

    chunks = []
    for session in sorted(by_session):
        index = 0
        for split in sorted(by_session[session], key=SPLITS.index):
            members = by_session[session][split]
            if packable is None or split in packable:
                groups = list(_greedy_groups(members, max_duration_s))
            else:
                groups = [[r] for r in members]
            for group in groups:
                total = math.fsum(r.duration_s for r in group)
                flags = frozenset({"overlong_singleton"}) if total > max_duration_s else frozenset()
                text = " ".join(
                    t for t in (
                        r.normalized_transcript if r.normalized_transcript is not None
                        else normalize(r.raw_transcript, cfg)
                        for r in group
                    ) if t
                )
                chunks.append(Chunk(
                    chunk_id=f"{session}-{index:04d}",
                    session_id=session,
                    split=split,
                    member_ids=tuple(r.id for r in group),
                    total_duration_s=total,
                    combined_transcript=text,
                    audio_path=str(Path(audio_dir) / chunk_filename(session, index)),
                    flags=flags,
                ))
                index += 1
    return chunks


def write_chunk_audio(chunks: Sequence[Chunk], records: Iterable[UtteranceRecord]) -> dict[str, str]:
    """Concatenate member audio for every chunk; returns {chunk_id: error} for failures."""
    by_id = {r.id: r for r in records}
    failures = {}
    for chunk in chunks:
        try:
            concat([by_id[m].audio_path for m in chunk.member_ids], chunk.audio_path)
        except (AudioError, OSError) as e:
            failures[chunk.chunk_id] = str(e)
    return failures


def export_training_manifest(chunks: Sequence[Chunk], out_path) -> None:
    """One line per chunk: audio_path, text, duration_s, split."""
    for chunk in chunks:
        if not Path(chunk.audio_path).is_file():
            raise CorpusForgeError(f"chunk {chunk.chunk_id}: audio file {chunk.audio_path} is missing")
    rows = [
        {"audio_path": c.audio_path, "text": c.combined_transcript,
         "duration_s": c.total_duration_s, "split": c.split}
        for c in chunks
    ]
    try:
        write_jsonl(out_path, rows)
    except OSError as e:
        raise CorpusForgeError(f"cannot write training manifest {out_path}: {e}") from None


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict
    seed: str
    ratios: tuple

    def counts(self) -> dict[str, int]:
        out = {"train": 0, "dev": 0, "test": 0}
        for split in self.assignment.values():
            out[split] += 1
        return out

    def to_lines(self) -> str:
        return "".join(f"{uid}\t{self.assignment[uid]}\n" for uid in sorted(self.assignment))


def _as_fraction(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def split_counts(n: int, ratios: Sequence) -> list[int]:
    fr = [_as_fraction(r) for r in ratios]
    counts = [math.floor(r * n) for r in fr]
    i = 0
    while sum(counts) < n:
        counts[i % len(counts)] += 1
        i += 1
    return counts


def shuffle_key(seed: str, uid: str) -> bytes:
    return hashlib.sha256(f"{seed}:{uid}".encode("utf-8")).digest()


def assign_splits(ids: Iterable[str], ratios=(0.8, 0.1, 0.1), seed: str = "0") -> SplitAssignment:
    """Deterministic train/dev/test assignment.

    Ids are ordered by SHA-256 of ``seed:id``; split sizes are floor(ratio*n)
    with the remainder handed out one at a time to train, dev, test.
    """
    ids = list(ids)
    ratios = tuple(ratios)
    if len(ratios) != 3:
        raise ValueError("expected three ratios (train, dev, test)")
    if any(r < 0 for r in ratios) or abs(math.fsum(float(r) for r in ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios {ratios} must be non-negative and sum to 1")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    order = sorted(ids, key=lambda uid: (shuffle_key(seed, uid), uid))
    n_train, n_dev, _ = split_counts(len(order), ratios)
    assignment = {}
    for pos, uid in enumerate(order):
        if pos < n_train:
            assignment[uid] = "train"
        elif pos < n_train + n_dev:
            assignment[uid] = "dev"
        else:
            assignment[uid] = "test"
    return SplitAssignment(assignment, seed, ratios)


def apply_splits(manifest: Manifest, ratios=(0.8, 0.1, 0.1), seed: str = "0",
                 unit: str = "utterance") -> Manifest:
    """Assign splits to every record, grouping by ``unit`` (utterance, session or speaker)."""
    if unit == "utterance":
        key = lambda r: r.id  # noqa: E731
    elif unit == "session":
        key = lambda r: r.session_id  # noqa: E731
    elif unit == "speaker":
        missing = [r.id for r in manifest if r.speaker_id is None]
        if missing:
            raise CorpusForgeError(f"{len(missing)} record(s) have no speaker_id, e.g. {missing[0]}")
        key = lambda r: r.speaker_id  # noqa: E731
    else:
        raise ValueError(f"unknown split unit {unit!r}")
    groups = sorted({key(r) for r in manifest})
    sa = assign_splits(groups, ratios, seed)
    return manifest.with_records(
        (replace(r, split=sa.assignment[key(r)]) for r in manifest),
        split_seed=seed, split_unit=unit,
    )


@dataclass(frozen=True)
class SpeakerViolation:
    speaker_id: str
    splits: frozenset

    def __str__(self):
        return f"{self.speaker_id}: {','.join(sorted(self.splits, key=SPLITS.index))}"


def validate_speaker_disjoint(records: Iterable[UtteranceRecord]) -> tuple[list[SpeakerViolation], list[str]]:
    """Speakers that appear in more than one split, plus ids lacking a speaker.

    Records still marked ``unassigned`` are not part of any split and are ignored.
    """
    seen: dict[str, set] = defaultdict(set)
    unverifiable = []
    for r in records:
        if r.speaker_id is None:
            unverifiable.append(r.id)
        elif r.split != "unassigned":
            seen[r.speaker_id].add(r.split)
    violations = [SpeakerViolation(s, frozenset(v)) for s, v in sorted(seen.items()) if len(v) > 1]
    return violations, sorted(unverifiable)
