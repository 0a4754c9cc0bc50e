"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 findings (validate), 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .analysis import (
    CascadeRow,
    alignment_report,
    dataset_accounting,
    filler_retention,
    render_accounting,
    render_cascade,
)
from .curation import (
    FilterPolicy,
    apply_splits,
    export_training_manifest,
    is_no_speech,
    pack_sessions,
    run_cascade,
    score_records,
    validate_speaker_disjoint,
    write_chunk_audio,
)
from .errors import CorpusForgeError, MissingHypotheses
from .normalize import config_from_env, normalize, normalize_with_flags
from .records import (
    SPLITS,
    iter_jsonl,
    read_hypotheses,
    read_manifest,
    scan_corpus,
    write_jsonl,
    write_manifest,
)
from .wer import aggregate, percent

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("corpus_forge")


class UsageError(Exception):
    pass


def _summary(command: str, **fields) -> None:
    parts = [f"command={command}"] + [f"{k}={v}" for k, v in fields.items()]
    print(" ".join(parts))


def _splits_arg(text: str) -> frozenset:
    splits = frozenset(s.strip() for s in text.split(",") if s.strip())
    bad = splits - set(SPLITS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown split(s): {', '.join(sorted(bad))}")
    return splits


def _ratios_arg(text: str) -> tuple:
    try:
        ratios = tuple(Fraction(x.strip()) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    if len(ratios) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return ratios


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


def _out_path(args) -> Path:
    _require(args, "out")
    out = Path(args.out)
    if args.manifest and out.resolve() == Path(args.manifest).resolve():
        raise UsageError("--out must differ from --manifest; input manifests are never rewritten")
    return out


def _policy(args) -> FilterPolicy:
    return FilterPolicy(
        wer_threshold=Fraction(args.wer_threshold),
        min_words=args.min_words,
        max_duration_s=args.max_duration,
        duration_filtered_splits=args.duration_splits,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_scan(args, cfg) -> int:
    _require(args, "root")
    out = _out_path(args)
    result = scan_corpus(args.root, args.layout, args.id_pattern, args.jobs)
    manifest = result.manifest.with_records(result.manifest.records, command="scan")
    write_manifest(manifest, out)
    if args.skip_report:
        write_jsonl(args.skip_report, ({"path": s.path, "reason": s.reason} for s in result.skipped))
    for s in result.skipped:
        log.warning("skipped %s: %s", s.path, s.reason)
    _summary("scan", records=len(manifest), skipped=len(result.skipped), out=out)
    if args.pipeline:
        return _run_pipeline(args, cfg, out)
    return EXIT_OK


def _normalize_manifest(manifest, cfg):
    records = []
    passthrough = 0
    for r in manifest:
        text, flagged = normalize_with_flags(r.raw_transcript, cfg)
        flags = r.flags | {"number_passthrough"} if flagged else r.flags - {"number_passthrough"}
        passthrough += flagged
        records.append(replace(r, normalized_transcript=text, flags=frozenset(flags)))
    return manifest.with_records(records), passthrough


def cmd_normalize(args, cfg) -> int:
    _require(args, "manifest")
    out = _out_path(args)
    manifest, passthrough = _normalize_manifest(read_manifest(args.manifest), cfg)
    write_manifest(manifest, out)
    _summary("normalize", records=len(manifest), number_passthrough=passthrough, out=out)
    return EXIT_OK


def cmd_score(args, cfg) -> int:
    _require(args, "manifest", "hyp")
    manifest = read_manifest(args.manifest)
    hyps = read_hypotheses(args.hyp)
    # annotator no-speech labels are not transcripts and need no hypothesis
    scores = score_records([r for r in manifest if not is_no_speech(r)], hyps, cfg, args.jobs)
    ordered = [scores[r.id] for r in manifest if r.id in scores]
    if args.out:
        out = _out_path(args)
        write_jsonl(out, (s.to_json() for s in ordered))
    if ordered:
        corpus = percent(aggregate(ordered, macro=args.macro), 2)
    else:
        corpus = "nan"
    _summary("score", records=len(manifest), scored=len(ordered),
             unscorable=len(manifest) - len(ordered),
             averaging="macro" if args.macro else "micro", wer_percent=corpus,
             out=args.out or "-")
    return EXIT_OK


def cmd_filter(args, cfg) -> int:
    _require(args, "manifest", "hyp")
    out = _out_path(args)
    manifest = read_manifest(args.manifest)
    hyps = read_hypotheses(args.hyp)
    result = run_cascade(manifest, hyps, _policy(args), cfg, args.jobs)
    text, rows = render_cascade(result.rows)
    if text:
        print(text)
    write_manifest(result.manifest.with_records(result.manifest.records, command="filter"), out)
    if args.report:
        write_jsonl(args.report, rows)
    if args.decisions:
        write_jsonl(args.decisions, (d.to_json() for d in result.decisions))
    if args.removed:
        by_id = manifest.by_id()
        removed = [by_id[d.utterance_id].with_flags(d.reason)
                   for d in result.decisions if d.verdict == "remove"]
        write_manifest(manifest.with_records(removed, command="filter --removed"), args.removed)
    n_removed = sum(d.verdict == "remove" for d in result.decisions)
    _summary("filter", records=len(manifest), kept=len(result.manifest), removed=n_removed, out=out)
    return EXIT_OK


def cmd_pack(args, cfg) -> int:
    _require(args, "manifest")
    out = _out_path(args)
    manifest = read_manifest(args.manifest)
    audio_dir = Path(args.audio_dir) if args.audio_dir else out.parent / f"{out.stem}_audio"
    chunks = pack_sessions(list(manifest), args.max_duration, audio_dir, cfg, args.pack_splits)
    failures = write_chunk_audio(chunks, manifest)
    for chunk_id, err in sorted(failures.items()):
        log.error("chunk %s: %s", chunk_id, err)
    if failures:
        raise CorpusForgeError(f"{len(failures)} chunk(s) failed audio concatenation")
    export_training_manifest(chunks, out)
    if args.chunks:
        write_jsonl(args.chunks, (c.to_json() for c in chunks))
    overlong = sum("overlong_singleton" in c.flags for c in chunks)
    _summary("pack", records=len(manifest), chunks=len(chunks), overlong_singletons=overlong, out=out)
    return EXIT_OK


def cmd_split(args, cfg) -> int:
    _require(args, "manifest")
    out = _out_path(args)
    manifest = read_manifest(args.manifest)
    if args.seed is None:
        raise UsageError("split: --seed is required")
    result = apply_splits(manifest, args.ratios, args.seed, args.unit)
    write_manifest(result, out)
    counts = {s: sum(r.split == s for r in result) for s in ("train", "dev", "test")}
    _summary("split", records=len(result), seed=args.seed, unit=args.unit, **counts, out=out)
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    _require(args, "manifest")
    manifest = read_manifest(args.manifest)
    violations, unverifiable = validate_speaker_disjoint(manifest)
    problems = []
    for v in violations:
        problems.append(f"speaker_overlap {v}")
    for r in manifest:
        if r.normalized_transcript is not None and normalize(r.normalized_transcript, cfg) != r.normalized_transcript:
            problems.append(f"not_normalized {r.id}")
        if r.duration_s <= 0 and Path(r.audio_path).is_file():
            problems.append(f"zero_duration {r.id}")
    for line in problems:
        print(line)
    if unverifiable:
        log.info("%d record(s) without speaker_id cannot be checked", len(unverifiable))
    _summary("validate", records=len(manifest), violations=len(violations),
             problems=len(problems), unverifiable=len(unverifiable))
    return EXIT_FINDINGS if problems else EXIT_OK


def cmd_report(args, cfg) -> int:
    kind = args.kind
    structured = []
    if kind == "accounting":
        manifests = {}
        if args.manifest:
            manifests[Path(args.manifest).stem] = read_manifest(args.manifest)
        for spec in args.corpus or ():
            name, _, path = spec.partition("=")
            if not path:
                raise UsageError(f"--corpus expects NAME=PATH, got {spec!r}")
            manifests[name] = read_manifest(path)
        if not manifests:
            raise UsageError("report accounting needs --manifest or --corpus")
        rows = dataset_accounting(manifests)
        text = render_accounting(rows)
        structured = [r.to_json() for r in rows]
    elif kind == "cascade":
        _require(args, "cascade")
        rows = []
        for _, obj in iter_jsonl(args.cascade):
            wer = obj.get("wer_percent")
            rows.append(CascadeRow(obj["stage"], obj["stage_label"], obj["split"], obj["hours"],
                                   None if wer is None else Fraction(wer) / 100))
        text, structured = render_cascade(rows)
    elif kind in ("align", "fillers"):
        _require(args, "manifest", "hyp")
        manifest = read_manifest(args.manifest)
        hyps = read_hypotheses(args.hyp)
        missing = [r.id for r in manifest if r.id not in hyps]
        if missing:
            raise MissingHypotheses(missing)
        # fillers must survive normalization to be inspected
        analysis_cfg = cfg.replace(remove_fillers=False)
        if kind == "align":
            blocks = []
            for r in manifest:
                blocks.append(f"{r.id}\n{alignment_report(r.raw_transcript, hyps[r.id], analysis_cfg)}")
            text = "\n\n".join(blocks)
        else:
            fr = filler_retention(((r.raw_transcript, hyps[r.id]) for r in manifest), analysis_cfg)
            structured = [fr.to_json()]
            text = " ".join(f"{k}={v}" for k, v in fr.to_json().items())
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown report kind {kind}")

    if args.out:
        Path(args.out).write_text(text + "\n" if text else "", encoding="utf-8")
        if structured:
            write_jsonl(f"{args.out}.jsonl", structured)
    elif text:
        print(text)
    _summary("report", kind=kind, out=args.out or "-")
    return EXIT_OK


def _run_pipeline(args, cfg, scanned: Path) -> int:
    """normalize -> score -> filter -> pack from an already written scan."""
    _require(args, "hyp")
    work = Path(args.work_dir) if args.work_dir else scanned.parent
    work.mkdir(parents=True, exist_ok=True)
    stem = scanned.stem
    steps = [
        ["normalize", "--manifest", str(scanned), "--out", str(work / f"{stem}.normalized.jsonl")],
        ["score", "--manifest", str(work / f"{stem}.normalized.jsonl"), "--hyp", args.hyp,
         "--out", str(work / f"{stem}.scores.jsonl")],
        ["filter", "--manifest", str(work / f"{stem}.normalized.jsonl"), "--hyp", args.hyp,
         "--out", str(work / f"{stem}.filtered.jsonl"),
         "--wer-threshold", str(args.wer_threshold), "--min-words", str(args.min_words),
         "--max-duration", repr(args.max_duration),
         "--duration-splits", ",".join(sorted(args.duration_splits))],
        ["pack", "--manifest", str(work / f"{stem}.filtered.jsonl"),
         "--out", str(work / f"{stem}.train.jsonl"),
         "--max-duration", repr(args.max_duration),
         "--pack-splits", ",".join(sorted(args.pack_splits))]
        + (["--audio-dir", args.audio_dir] if args.audio_dir else []),
    ]
    shared = ["--jobs", str(args.jobs)] + (["--config", args.config] if args.config else [])
    for step in steps:
        code = main(step + shared)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="input manifest (JSONL)")
    common.add_argument("--out", help="output path")
    common.add_argument("--config", help="normalizer config (JSON); falls back to $CORPUS_FORGE_CONFIG")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker count")
    common.add_argument("--seed", help="seed for anything randomized")
    common.add_argument("-v", "--verbose", action="store_true")

    policy = argparse.ArgumentParser(add_help=False)
    policy.add_argument("--wer-threshold", default="0.5", help="remove files with WER strictly above this")
    policy.add_argument("--min-words", type=int, default=3, help="remove files with fewer raw words")
    policy.add_argument("--max-duration", type=float, default=30.0, help="seconds")
    policy.add_argument("--duration-splits", type=_splits_arg, default=frozenset({"train", "dev"}),
                        help="splits where over-long files are removed")

    packing = argparse.ArgumentParser(add_help=False)
    packing.add_argument("--audio-dir", help="directory for packed chunk audio")
    packing.add_argument("--pack-splits", type=_splits_arg,
                         default=frozenset({"train", "dev", "unassigned"}),
                         help="splits whose sessions are packed; others stay one file per chunk")

    parser = argparse.ArgumentParser(prog="corpus-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"corpus-forge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("scan", parents=[common, policy, packing], help="build a manifest from a corpus tree")
    p.add_argument("--root", help="corpus root directory")
    p.add_argument("--layout", choices=("session_tree", "generic"), default="session_tree")
    p.add_argument("--id-pattern", default=r"^(?P<session>.+?)(?:[-_]\d+)?$",
                   help="generic layout: regex with (?P<session>) and optional (?P<speaker>) groups")
    p.add_argument("--skip-report", help="write skipped files here")
    p.add_argument("--pipeline", action="store_true",
                   help="continue with normalize, score, filter and pack")
    p.add_argument("--hyp", help="hypothesis file (for --pipeline)")
    p.add_argument("--work-dir", help="intermediate files for --pipeline (default: next to --out)")

    sub.add_parser("normalize", parents=[common], help="fill normalized transcripts")

    p = sub.add_parser("score", parents=[common], help="per-file and corpus WER")
    p.add_argument("--hyp", help="hypothesis file")
    p.add_argument("--macro", action="store_true", help="report mean per-file WER instead of micro-average")

    p = sub.add_parser("filter", parents=[common, policy], help="run the filtering cascade")
    p.add_argument("--hyp", help="hypothesis file")
    p.add_argument("--report", help="write structured cascade rows here")
    p.add_argument("--decisions", help="write per-record filter decisions here")
    p.add_argument("--removed", help="write removed records (flagged) here")

    p = sub.add_parser("pack", parents=[common, packing], help="pack sessions into <=30 s chunks")
    p.add_argument("--max-duration", type=float, default=30.0, help="seconds")
    p.add_argument("--chunks", help="write chunk membership records here")

    p = sub.add_parser("split", parents=[common], help="assign train/dev/test deterministically")
    p.add_argument("--ratios", type=_ratios_arg, default=(Fraction(4, 5), Fraction(1, 10), Fraction(1, 10)))
    p.add_argument("--unit", choices=("utterance", "session", "speaker"), default="utterance")

    sub.add_parser("validate", parents=[common], help="check speaker disjointness and record invariants")

    p = sub.add_parser("report", parents=[common], help="render analysis reports")
    p.add_argument("kind", choices=("accounting", "cascade", "align", "fillers"))
    p.add_argument("--corpus", action="append", help="NAME=MANIFEST for accounting (repeatable)")
    p.add_argument("--cascade", help="structured cascade rows from 'filter --report'")
    p.add_argument("--hyp", help="hypothesis file")
    return parser


COMMANDS = {
    "scan": cmd_scan,
    "normalize": cmd_normalize,
    "score": cmd_score,
    "filter": cmd_filter,
    "pack": cmd_pack,
    "split": cmd_split,
    "validate": cmd_validate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.print_usage(sys.stderr)
        print("corpus-forge: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = config_from_env(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"corpus-forge: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusForgeError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"corpus-forge: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"corpus-forge: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
