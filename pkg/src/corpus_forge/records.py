"""Manifest records, JSONL serialization, hypothesis files and corpus scanning."""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from . import __version__
from .audio import probe
from .errors import AudioError, CorpusForgeError, DuplicateId, ParseError

log = logging.getLogger(__name__)

FORMAT = "corpus-forge/1"
SPLITS = ("train", "dev", "test", "unassigned")
FLAGS = frozenset(
    {"no_speech_label", "too_short", "high_wer", "too_long", "overlong_singleton", "number_passthrough"}
)
TRANSCRIPT_SUFFIXES = (".txt", ".trn", ".lab")
_SPLIT_DIRS = {"train": "train", "dev": "dev", "development": "dev", "test": "test"}
DEFAULT_ID_PATTERN = r"^(?P<session>.+?)(?:[-_]\d+)?$"


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    session_id: str
    audio_path: str
    duration_s: float
    raw_transcript: str
    split: str = "unassigned"
    speaker_id: str | None = None
    normalized_transcript: str | None = None
    flags: frozenset = frozenset()

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"{self.id}: unknown split {self.split!r}")
        if not self.duration_s >= 0:
            raise ValueError(f"{self.id}: negative duration {self.duration_s}")
        flags = frozenset(self.flags)
        unknown = flags - FLAGS
        if unknown:
            raise ValueError(f"{self.id}: unknown flags {sorted(unknown)}")
        object.__setattr__(self, "flags", flags)

    def with_flags(self, *extra: str) -> "UtteranceRecord":
        return replace(self, flags=self.flags | frozenset(extra))

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "session_id": self.session_id,
        }
        if self.speaker_id is not None:
            out["speaker_id"] = self.speaker_id
        out["split"] = self.split
        out["audio_path"] = self.audio_path
        out["duration_s"] = self.duration_s
        out["raw_transcript"] = self.raw_transcript
        if self.normalized_transcript is not None:
            out["normalized_transcript"] = self.normalized_transcript
        out["flags"] = sorted(self.flags)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "UtteranceRecord":
        required = ("id", "session_id", "split", "audio_path", "duration_s", "raw_transcript")
        missing = [k for k in required if k not in obj]
        if missing:
            raise ValueError(f"missing field(s) {', '.join(missing)}")
        known = set(required) | {"speaker_id", "normalized_transcript", "flags"}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown field(s) {', '.join(sorted(extra))}")
        duration = obj["duration_s"]
        if isinstance(duration, bool) or not isinstance(duration, (int, float)):
            raise ValueError("duration_s must be a number")
        for key in ("id", "session_id", "split", "audio_path", "raw_transcript"):
            if not isinstance(obj[key], str):
                raise ValueError(f"{key} must be a string")
        return cls(
            id=obj["id"],
            session_id=obj["session_id"],
            speaker_id=obj.get("speaker_id"),
            split=obj["split"],
            audio_path=obj["audio_path"],
            duration_s=float(duration),
            raw_transcript=obj["raw_transcript"],
            normalized_transcript=obj.get("normalized_transcript"),
            flags=frozenset(obj.get("flags", ())),
        )


@dataclass(frozen=True)
class Manifest:
    records: tuple[UtteranceRecord, ...] = ()
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        recs = tuple(sorted(self.records, key=lambda r: r.id))
        for a, b in zip(recs, recs[1:]):
            if a.id == b.id:
                raise DuplicateId(a.id)
        object.__setattr__(self, "records", recs)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, UtteranceRecord]:
        return {r.id: r for r in self.records}

    def with_records(self, records: Iterable[UtteranceRecord], **provenance) -> "Manifest":
        return Manifest(tuple(records), {**self.provenance, **provenance})


@dataclass(frozen=True)
class Hypothesis:
    utterance_id: str
    text: str


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def _header(**extra) -> str:
    return _dumps({"format": FORMAT, **extra})


def write_jsonl(path, rows: Iterable[dict], **header) -> None:
    """Write a versioned JSONL file: header line, then one object per line."""
    tmp = Path(f"{path}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(**header) + "\n")
        for row in rows:
            f.write(_dumps(row) + "\n")
    os.replace(tmp, path)


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, object) for each record line, validating the header."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # no trailing newline: the last line was cut short
        last = len(lines)
        try:
            json.loads(lines[-1])
        except json.JSONDecodeError:
            raise ParseError(path, last, "truncated line") from None
    if not lines:
        return
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(path, 1, f"bad header: {e.msg}") from None
    if not isinstance(head, dict) or head.get("format") != FORMAT:
        raise ParseError(path, 1, f"expected header {{\"format\": \"{FORMAT}\"}}")
    for no, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(path, no, e.msg) from None
        if not isinstance(obj, dict):
            raise ParseError(path, no, "record is not an object")
        yield no, obj


def read_header(path) -> dict:
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    try:
        head = json.loads(first) if first.strip() else {}
    except json.JSONDecodeError:
        raise ParseError(path, 1, "bad header") from None
    return head if isinstance(head, dict) else {}


def read_manifest(path) -> Manifest:
    records = []
    seen = set()
    for no, obj in iter_jsonl(path):
        try:
            rec = UtteranceRecord.from_json(obj)
        except (ValueError, TypeError) as e:
            raise ParseError(path, no, str(e)) from None
        if rec.id in seen:
            raise DuplicateId(rec.id, f"{path}:{no}")
        seen.add(rec.id)
        records.append(rec)
    provenance = read_header(path).get("provenance", {})
    return Manifest(tuple(records), provenance if isinstance(provenance, dict) else {})


def write_manifest(manifest: Manifest, path) -> None:
    header = {"provenance": manifest.provenance} if manifest.provenance else {}
    write_jsonl(path, (r.to_json() for r in manifest.records), **header)


def read_hypotheses(path) -> dict[str, str]:
    hyps: dict[str, str] = {}
    for no, obj in iter_jsonl(path):
        uid, text = obj.get("utterance_id"), obj.get("text")
        if not isinstance(uid, str):
            raise ParseError(path, no, "missing or non-string field 'utterance_id'")
        if not isinstance(text, str):
            raise ParseError(path, no, "missing or non-string field 'text'")
        if uid in hyps:
            raise DuplicateId(uid, f"{path}:{no}")
        hyps[uid] = text
    return hyps


def write_hypotheses(hyps, path) -> None:
    items = sorted(hyps.items()) if isinstance(hyps, dict) else [(h.utterance_id, h.text) for h in hyps]
    write_jsonl(path, ({"utterance_id": k, "text": v} for k, v in items))


# ---------------------------------------------------------------------------
# scanning


@dataclass(frozen=True)
class SkipEntry:
    path: str
    reason: str


@dataclass
class ScanResult:
    manifest: Manifest
    skipped: list[SkipEntry]


def _split_from_parts(parts) -> str:
    for part in parts:
        split = _SPLIT_DIRS.get(part.lower())
        if split:
            return split
    return "unassigned"


def _read_transcript(path: Path) -> str:
    return " ".join(path.read_text(encoding="utf-8", errors="replace").split())


def scan_corpus(root, layout: str = "session_tree", id_pattern: str = DEFAULT_ID_PATTERN,
                jobs: int = 1) -> ScanResult:
    """Pair every ``.wav`` under ``root`` with its sidecar transcript.

    ``session_tree``: session is the parent directory, speaker its parent
    (unless that is the root or a split directory). ``generic``: session and
    optional speaker come from the named groups ``session`` / ``speaker`` of
    ``id_pattern`` matched against the file stem.
    """
    root = Path(root)
    if layout not in ("session_tree", "generic"):
        raise ValueError(f"unknown layout {layout!r}")
    if not root.is_dir():
        raise CorpusForgeError(f"corpus root {root} is not a readable directory")
    pattern = re.compile(id_pattern)
    if layout == "generic" and "session" not in pattern.groupindex:
        raise ValueError("id pattern needs a (?P<session>...) group")

    audio: dict[Path, Path] = {}
    transcripts: dict[Path, Path] = {}
    try:
        for dirpath, dirnames, filenames in os.walk(root, onerror=_raise):
            dirnames.sort()
            for name in filenames:
                p = Path(dirpath) / name
                suffix = p.suffix.lower()
                if suffix == ".wav":
                    audio[p.with_suffix("")] = p
                elif suffix in TRANSCRIPT_SUFFIXES:
                    transcripts.setdefault(p.with_suffix(""), p)
    except OSError as e:
        raise CorpusForgeError(f"cannot read corpus root {root}: {e}") from None

    skipped = []
    pairs = []
    for stem in sorted(audio):
        if stem in transcripts:
            pairs.append((audio[stem], transcripts[stem]))
        else:
            skipped.append(SkipEntry(str(audio[stem]), "no transcript"))
    for stem in sorted(set(transcripts) - set(audio)):
        skipped.append(SkipEntry(str(transcripts[stem]), "no audio"))

    def build(pair):
        wav, trn = pair
        try:
            meta = probe(wav)
        except (AudioError, OSError) as e:
            return SkipEntry(str(wav), f"unreadable audio: {e}")
        rel = wav.relative_to(root)
        split = _split_from_parts(rel.parts[:-1])
        uid = wav.stem
        if layout == "session_tree":
            session = rel.parts[-2] if len(rel.parts) >= 2 else uid
            speaker = None
            if len(rel.parts) >= 3 and rel.parts[-3].lower() not in _SPLIT_DIRS:
                speaker = rel.parts[-3]
        else:
            m = pattern.search(uid)
            if not m:
                return SkipEntry(str(wav), f"id pattern does not match {uid!r}")
            session = m.group("session")
            speaker = m.groupdict().get("speaker")
        return UtteranceRecord(
            id=uid,
            session_id=session,
            speaker_id=speaker,
            split=split,
            audio_path=str(wav),
            duration_s=meta.duration_s,
            raw_transcript=_read_transcript(trn),
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            built = list(pool.map(build, pairs))
    else:
        built = [build(p) for p in pairs]

    records = []
    for item in built:
        if isinstance(item, SkipEntry):
            skipped.append(item)
        else:
            records.append(item)
    skipped.sort(key=lambda s: s.path)
    log.info("scanned %s: %d records, %d skipped", root, len(records), len(skipped))
    manifest = Manifest(
        tuple(records),
        {"source": str(root), "layout": layout, "tool": f"corpus-forge {__version__}"},
    )
    return ScanResult(manifest, skipped)


def _raise(err):
    raise err
