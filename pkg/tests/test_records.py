import json

import pytest

from corpus_forge.audio import duration_of
from corpus_forge.errors import CorpusForgeError, DuplicateId, ParseError
from corpus_forge.records import (
    FORMAT,
    Manifest,
    UtteranceRecord,
    read_hypotheses,
    read_manifest,
    scan_corpus,
    write_hypotheses,
    write_manifest,
)

from conftest import make_wav


def rec(uid, **kw):
    base = dict(id=uid, session_id="s", audio_path=f"{uid}.wav", duration_s=1.5, raw_transcript="hi there")
    base.update(kw)
    return UtteranceRecord(**base)


def write_lines(path, *objs, raw_tail=None):
    lines = [json.dumps({"format": FORMAT})] + [json.dumps(o) for o in objs]
    text = "\n".join(lines) + "\n"
    if raw_tail is not None:
        text += raw_tail
    path.write_text(text, encoding="utf-8")
    return path


def test_round_trip(tmp_path):
    m = Manifest((
        rec("u2", speaker_id="k1", split="train", normalized_transcript="hi there"),
        rec("u1", flags={"too_short", "high_wer"}),
        rec("u3", raw_transcript="ünïcode ✓", duration_s=0.1 + 0.2),
    ), {"tool": "test"})
    p = tmp_path / "m.jsonl"
    write_manifest(m, p)
    back = read_manifest(p)
    assert back.records == m.records
    assert [r.id for r in back] == ["u1", "u2", "u3"]
    assert back.provenance == {"tool": "test"}
    q = tmp_path / "m2.jsonl"
    write_manifest(back, q)
    assert p.read_bytes() == q.read_bytes()


def test_absent_optionals_omitted(tmp_path):
    p = tmp_path / "m.jsonl"
    write_manifest(Manifest((rec("u1"),)), p)
    line = json.loads(p.read_text().splitlines()[1])
    assert "speaker_id" not in line and "normalized_transcript" not in line
    assert json.loads(p.read_text().splitlines()[0]) == {"format": FORMAT}


def test_duplicate_id(tmp_path):
    r = rec("u1").to_json()
    p = write_lines(tmp_path / "m.jsonl", r, r)
    with pytest.raises(DuplicateId) as e:
        read_manifest(p)
    assert e.value.utterance_id == "u1"


def test_truncated_last_line(tmp_path):
    p = write_lines(tmp_path / "m.jsonl", rec("u1").to_json(), raw_tail='{"id": "u2", "sess')
    with pytest.raises(ParseError) as e:
        read_manifest(p)
    assert e.value.line_no == 3


def test_malformed_middle_line(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps({"format": FORMAT}) + "\n{oops\n" + json.dumps(rec("u1").to_json()) + "\n")
    with pytest.raises(ParseError) as e:
        read_manifest(p)
    assert e.value.line_no == 2


def test_missing_field_names_line(tmp_path):
    bad = rec("u2").to_json()
    del bad["duration_s"]
    p = write_lines(tmp_path / "m.jsonl", rec("u1").to_json(), bad)
    with pytest.raises(ParseError, match="duration_s") as e:
        read_manifest(p)
    assert e.value.line_no == 3


def test_bad_header(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps(rec("u1").to_json()) + "\n")
    with pytest.raises(ParseError):
        read_manifest(p)


def test_empty_file_is_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert len(read_manifest(p)) == 0


def test_record_validation():
    with pytest.raises(ValueError):
        rec("u", split="validation")
    with pytest.raises(ValueError):
        rec("u", duration_s=-1.0)
    with pytest.raises(ValueError):
        rec("u", flags={"bogus"})


def test_hypotheses(tmp_path):
    p = write_lines(tmp_path / "h.jsonl", {"utterance_id": "u1", "text": "a"}, {"utterance_id": "u2", "text": "b"})
    assert read_hypotheses(p) == {"u1": "a", "u2": "b"}


def test_hypotheses_duplicate(tmp_path):
    p = write_lines(tmp_path / "h.jsonl", {"utterance_id": "u1", "text": "a"}, {"utterance_id": "u1", "text": "c"})
    with pytest.raises(DuplicateId, match="u1"):
        read_hypotheses(p)


def test_hypotheses_missing_field(tmp_path):
    p = write_lines(tmp_path / "h.jsonl", {"utterance_id": "u1"})
    with pytest.raises(ParseError) as e:
        read_hypotheses(p)
    assert e.value.line_no == 2


def test_hypotheses_empty(tmp_path):
    p = tmp_path / "h.jsonl"
    p.write_text("")
    assert read_hypotheses(p) == {}
    write_hypotheses({}, p)
    assert read_hypotheses(p) == {}


def test_hypotheses_round_trip(tmp_path):
    p = tmp_path / "h.jsonl"
    write_hypotheses({"b": "two", "a": "one"}, p)
    assert read_hypotheses(p) == {"a": "one", "b": "two"}


# scanning

def build_tree(root, entries):
    for rel, frames, text in entries:
        wav = root / rel
        make_wav(wav, frames)
        if text is not None:
            wav.with_suffix(".txt").write_text(text)


def test_scan_split_dirs(tmp_path):
    build_tree(tmp_path, [("train/s1/a.wav", 16000, "hello"), ("test/s2/b.wav", 8000, "bye")])
    result = scan_corpus(tmp_path)
    assert [(r.id, r.split, r.session_id, r.speaker_id) for r in result.manifest] == [
        ("a", "train", "s1", None), ("b", "test", "s2", None)]
    assert result.skipped == []


def test_scan_empty(tmp_path):
    result = scan_corpus(tmp_path)
    assert len(result.manifest) == 0 and result.skipped == []


def test_scan_skips_unpaired(tmp_path):
    build_tree(tmp_path, [("s1/a.wav", 100, None), ("s1/b.wav", 100, "ok")])
    (tmp_path / "s1" / "c.txt").write_text("orphan")
    result = scan_corpus(tmp_path)
    assert [r.id for r in result.manifest] == ["b"]
    assert [(s.path, s.reason) for s in result.skipped] == [
        (str(tmp_path / "s1" / "a.wav"), "no transcript"),
        (str(tmp_path / "s1" / "c.txt"), "no audio"),
    ]


def test_scan_skips_bad_audio(tmp_path):
    (tmp_path / "s1").mkdir()
    (tmp_path / "s1" / "a.wav").write_bytes(b"not audio at all")
    (tmp_path / "s1" / "a.txt").write_text("x")
    result = scan_corpus(tmp_path)
    assert len(result.manifest) == 0
    assert "unreadable audio" in result.skipped[0].reason


def test_scan_session_tree_speaker_and_development(tmp_path):
    build_tree(tmp_path, [
        ("development/stu7/sess3/x_001.wav", 4000, "one"),
        ("development/stu7/sess3/x_002.wav", 4000, "two"),
    ])
    (tmp_path / "development/stu7/sess3/x_002.txt").rename(tmp_path / "development/stu7/sess3/x_002.trn")
    recs = list(scan_corpus(tmp_path).manifest)
    assert [(r.split, r.speaker_id, r.session_id) for r in recs] == [("dev", "stu7", "sess3")] * 2


def test_scan_generic_pattern(tmp_path):
    build_tree(tmp_path, [("flat/spk1_sessA_003.wav", 1600, "a"), ("flat/spk2_sessB_001.wav", 1600, "b")])
    pattern = r"^(?P<speaker>[^_]+)_(?P<session>[^_]+)_\d+$"
    recs = list(scan_corpus(tmp_path, "generic", pattern).manifest)
    assert [(r.speaker_id, r.session_id, r.split) for r in recs] == [
        ("spk1", "sessA", "unassigned"), ("spk2", "sessB", "unassigned")]


def test_scan_generic_default_pattern_has_no_speaker(tmp_path):
    build_tree(tmp_path, [("call-17_004.wav", 1600, "a")])
    (r,) = scan_corpus(tmp_path, "generic").manifest
    assert (r.session_id, r.speaker_id) == ("call-17", None)


def test_scan_durations_match_probe(tmp_path):
    frames = [1, 7919, 16000, 33333, 480001]
    build_tree(tmp_path, [(f"s/u{i}.wav", n, "text") for i, n in enumerate(frames)])
    for r in scan_corpus(tmp_path).manifest:
        assert abs(r.duration_s - duration_of(r.audio_path)) <= 1e-9
        assert r.duration_s > 0


def test_scan_deterministic_across_jobs(tmp_path):
    build_tree(tmp_path / "c", [(f"train/s{i % 3}/u{i:03d}.wav", 100 + i, f"t {i}") for i in range(40)])
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_manifest(scan_corpus(tmp_path / "c", jobs=1).manifest, a)
    write_manifest(scan_corpus(tmp_path / "c", jobs=4).manifest, b)
    assert a.read_bytes() == b.read_bytes()


def test_scan_missing_root(tmp_path):
    with pytest.raises(CorpusForgeError):
        scan_corpus(tmp_path / "nope")


def test_scan_duplicate_stems(tmp_path):
    build_tree(tmp_path, [("s1/a.wav", 10, "x"), ("s2/a.wav", 10, "y")])
    with pytest.raises(DuplicateId):
        scan_corpus(tmp_path)
