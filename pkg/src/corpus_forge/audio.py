"""RIFF/WAVE PCM header parsing and payload concatenation.

Only integer PCM is supported (format tag 1, or WAVE_FORMAT_EXTENSIBLE with
the PCM sub-format). Nothing is resampled or converted.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

from .errors import AudioError, FormatMismatch, MalformedHeader, UnsupportedFormat

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM
_PCM_SUBFORMAT = bytes.fromhex("0100000000001000800000aa00389b71")

_COPY_BLOCK = 1 << 20


@dataclass(frozen=True)
class AudioMeta:
    sample_rate_hz: int
    channels: int
    bits_per_sample: int
    num_frames: int

    @property
    def block_align(self) -> int:
        return self.channels * ((self.bits_per_sample + 7) // 8)

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.sample_rate_hz

    def same_format(self, other: "AudioMeta") -> bool:
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.channels == other.channels
            and self.bits_per_sample == other.bits_per_sample
        )


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise MalformedHeader(f"truncated {what}: wanted {n} bytes, got {len(data)}")
    return data


def _read_header(f: BinaryIO) -> tuple[AudioMeta, int, int]:
    """Return (meta, payload offset, payload size) without reading the payload."""
    riff = f.read(12)
    if len(riff) < 12:
        raise MalformedHeader("file too short for a RIFF header")
    magic, _riff_size, wave = struct.unpack("<4sI4s", riff)
    if magic == b"RIFX":
        raise UnsupportedFormat("big-endian RIFX files are not supported")
    if magic != b"RIFF":
        raise UnsupportedFormat(f"not a RIFF file (magic {magic!r})")
    if wave != b"WAVE":
        raise UnsupportedFormat(f"RIFF form type is {wave!r}, not WAVE")

    fmt = None
    while True:
        head = f.read(8)
        if len(head) == 0:
            break
        if len(head) < 8:
            raise MalformedHeader("truncated chunk header")
        chunk_id, size = struct.unpack("<4sI", head)
        if chunk_id == b"fmt ":
            if size < 16:
                raise MalformedHeader(f"fmt chunk too small ({size} bytes)")
            body = _read_exact(f, size, "fmt chunk")
            tag, channels, rate, _byte_rate, _align, bits = struct.unpack_from("<HHIIHH", body)
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if size < 40 or body[24:40] != _PCM_SUBFORMAT:
                    raise UnsupportedFormat("extensible WAV with non-PCM sub-format")
            elif tag != WAVE_FORMAT_PCM:
                raise UnsupportedFormat(f"non-PCM format tag 0x{tag:04x}")
            if channels < 1 or rate < 1 or bits < 1:
                raise MalformedHeader(
                    f"invalid fmt fields: channels={channels} rate={rate} bits={bits}"
                )
            fmt = (rate, channels, bits)
            if size % 2:
                f.seek(1, os.SEEK_CUR)
        elif chunk_id == b"data":
            if fmt is None:
                raise MalformedHeader("data chunk precedes fmt chunk")
            offset = f.tell()
            end = f.seek(0, os.SEEK_END)
            if offset + size > end:
                raise MalformedHeader(
                    f"data chunk declares {size} bytes but only {end - offset} remain"
                )
            rate, channels, bits = fmt
            align = channels * ((bits + 7) // 8)
            if size % align:
                raise MalformedHeader(f"data size {size} is not a multiple of block align {align}")
            return AudioMeta(rate, channels, bits, size // align), offset, size
        else:
            f.seek(size + (size % 2), os.SEEK_CUR)
    if fmt is None:
        raise MalformedHeader("missing fmt chunk")
    raise MalformedHeader("missing data chunk")


def probe(path) -> AudioMeta:
    with open(path, "rb") as f:
        return _read_header(f)[0]


def duration_of(path) -> float:
    return probe(path).duration_s


def _header_bytes(meta: AudioMeta, data_size: int) -> bytes:
    align = meta.block_align
    pad = data_size % 2
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + data_size + pad,
        b"WAVE",
        b"fmt ",
        16,
        WAVE_FORMAT_PCM,
        meta.channels,
        meta.sample_rate_hz,
        meta.sample_rate_hz * align,
        align,
        meta.bits_per_sample,
        b"data",
        data_size,
    )


def write_pcm(path, payload: bytes, sample_rate_hz: int, channels: int = 1,
              bits_per_sample: int = 16) -> AudioMeta:
    """Write a canonical 44-byte-header PCM file from raw interleaved samples."""
    align = channels * ((bits_per_sample + 7) // 8)
    if len(payload) % align:
        raise AudioError(f"payload of {len(payload)} bytes is not a whole number of frames")
    meta = AudioMeta(sample_rate_hz, channels, bits_per_sample, len(payload) // align)
    with open(path, "wb") as f:
        f.write(_header_bytes(meta, len(payload)))
        f.write(payload)
        if len(payload) % 2:
            f.write(b"\x00")
    return meta


def concat(paths: Sequence, out_path) -> AudioMeta:
    """Concatenate PCM payloads of same-format files into ``out_path``.

    The output payload is the byte-wise concatenation of the input payloads,
    so its frame count is exactly the sum of the inputs'.
    """
    if not paths:
        raise AudioError("concat needs at least one input file")
    headers = []
    first = None
    for p in paths:
        with open(p, "rb") as f:
            meta, offset, size = _read_header(f)
        if first is None:
            first = (p, meta)
        elif not meta.same_format(first[1]):
            raise FormatMismatch(first[0], p, first[1], meta)
        headers.append((p, offset, size))

    total = sum(size for _, _, size in headers)
    out = AudioMeta(first[1].sample_rate_hz, first[1].channels, first[1].bits_per_sample,
                    total // first[1].block_align)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "wb") as dst:
        dst.write(_header_bytes(out, total))
        for p, offset, size in headers:
            with open(p, "rb") as src:
                src.seek(offset)
                remaining = size
                while remaining:
                    block = src.read(min(_COPY_BLOCK, remaining))
                    if not block:
                        raise MalformedHeader(f"{p}: payload shorter than declared")
                    dst.write(block)
                    remaining -= len(block)
        if total % 2:
            dst.write(b"\x00")
    return out


def chunk_filename(session_id: str, chunk_index: int) -> str:
    return f"{session_id}-{chunk_index:04d}.wav"


__all__ = [
    "AudioMeta",
    "chunk_filename",
    "concat",
    "duration_of",
    "probe",
    "write_pcm",
]
