"""English transcript normalization.

Pipeline order: lowercase, drop bracketed annotations, expand contractions,
strip punctuation, spell out numbers, drop fillers, collapse whitespace.
The result is a fixed point: normalizing it again returns it unchanged.
"""

from __future__ import annotations

import json
import os
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

DEFAULT_CONTRACTIONS: dict[str, str] = {
    "you're": "you are",
    "they're": "they are",
    "we're": "we are",
    "i'm": "i am",
    "it's": "it is",
    "that's": "that is",
    "let's": "let us",
    "can't": "cannot",
    "won't": "will not",
}

# (suffix, replacement); applied when nothing in the table matches exactly
SUFFIX_RULES: tuple[tuple[str, str], ...] = (
    ("n't", " not"),
    ("'ve", " have"),
    ("'ll", " will"),
    ("'re", " are"),
    ("'m", " am"),
)

DEFAULT_FILLERS = frozenset({"uh", "um", "uhm", "hmm", "mm", "mhm", "mmm"})

_ONES = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
).split()
_TENS = "_ _ twenty thirty forty fifty sixty seventy eighty ninety".split()

_BRACKETED = re.compile(r"\[[^\[\]]*\]|\([^()]*\)")
_WORD_RUN = re.compile(r"[a-z0-9']+")
_LOOSE_APOSTROPHE = re.compile(r"(?<![a-z])'|'(?![a-z])")
_NOT_ALLOWED = re.compile(r"[^a-z0-9'\s]")
_DIGITS = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class NormalizerConfig:
    contraction_table: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_CONTRACTIONS))
    filler_set: frozenset = DEFAULT_FILLERS
    suffix_rules: tuple = SUFFIX_RULES
    spell_numbers: bool = True
    number_max: int = 999_999
    remove_fillers: bool = True

    def __post_init__(self):
        table = {k.lower(): v.lower() for k, v in self.contraction_table.items()}
        for key, expansion in table.items():
            for word in expansion.split():
                if word in table:
                    raise ValueError(
                        f"contraction expansion {key!r} -> {expansion!r} contains table key {word!r}"
                    )
        object.__setattr__(self, "contraction_table", table)
        fillers = frozenset(self.filler_set)
        for tok in fillers:
            if tok != tok.lower() or "'" in tok:
                raise ValueError(f"filler {tok!r} must be lowercase and apostrophe-free")
        object.__setattr__(self, "filler_set", fillers)
        object.__setattr__(self, "suffix_rules", tuple((a, b) for a, b in self.suffix_rules))
        if self.number_max < 1:
            raise ValueError("number_max must be positive")

    def replace(self, **changes) -> "NormalizerConfig":
        values = {
            "contraction_table": self.contraction_table,
            "filler_set": self.filler_set,
            "suffix_rules": self.suffix_rules,
            "spell_numbers": self.spell_numbers,
            "number_max": self.number_max,
            "remove_fillers": self.remove_fillers,
        }
        values.update(changes)
        return NormalizerConfig(**values)


DEFAULT_CONFIG = NormalizerConfig()


def _read_contraction_file(path: Path) -> dict[str, str]:
    table = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            key, _, expansion = line.partition("\t")
        else:
            key, _, expansion = line.partition(" ")
        if not expansion.strip():
            raise ValueError(f"{path}:{line_no}: expected '<token> <expansion>'")
        table[key.strip()] = expansion.strip()
    return table


def load_config(path) -> NormalizerConfig:
    """Load a JSON config file.

    Recognized keys mirror :class:`NormalizerConfig`. ``contraction_table``
    may be an inline object or the path (relative to the config file) of a
    text file with one ``token<TAB>expansion`` pair per line.
    ``extra_contractions`` is merged on top of the default table, and
    ``suffix_rules`` (a list of ``[suffix, replacement]`` pairs, possibly
    empty) replaces the generic n't/'ve/'ll/'re/'m rules.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    kwargs = {}
    table = data.get("contraction_table")
    if isinstance(table, str):
        table = _read_contraction_file(path.parent / table)
    if table is None:
        table = dict(DEFAULT_CONTRACTIONS)
    extra = data.get("extra_contractions") or {}
    if isinstance(extra, str):
        extra = _read_contraction_file(path.parent / extra)
    kwargs["contraction_table"] = {**table, **extra}
    if "filler_set" in data:
        kwargs["filler_set"] = frozenset(data["filler_set"])
    for key in ("spell_numbers", "remove_fillers"):
        if key in data:
            kwargs[key] = bool(data[key])
    if "suffix_rules" in data:
        kwargs["suffix_rules"] = tuple(tuple(pair) for pair in data["suffix_rules"])
    if "number_max" in data:
        kwargs["number_max"] = int(data["number_max"])
    return NormalizerConfig(**kwargs)


def config_from_env(path=None) -> NormalizerConfig:
    path = path or os.environ.get("CORPUS_FORGE_CONFIG")
    return load_config(path) if path else DEFAULT_CONFIG


def spell_number(n: int, number_max: int = DEFAULT_CONFIG.number_max) -> str:
    if not 0 <= n <= number_max:
        raise ValueError(f"{n} is outside [0, {number_max}]")
    if n == 0:
        return "zero"
    return " ".join(_spell_positive(n))


def _spell_positive(n: int) -> list[str]:
    words = []
    if n >= 1_000_000:
        words += _spell_positive(n // 1_000_000) + ["million"]
        n %= 1_000_000
    if n >= 1000:
        words += _spell_positive(n // 1000) + ["thousand"]
        n %= 1000
    if n >= 100:
        words += [_ONES[n // 100], "hundred"]
        n %= 100
    if n >= 20:
        words.append(_TENS[n // 10])
        n %= 10
    if n:
        words.append(_ONES[n])
    return words


def tokenize(text: str) -> list[str]:
    return text.split()


@lru_cache(maxsize=64)
def _plain_suffixes(rules) -> tuple[str, ...]:
    return tuple(suffix for suffix, _ in rules if "'" not in suffix)


def _expand_word(word: str, table: Mapping[str, str], rules, depth: int = 0) -> str:
    if "'" not in word and word not in table and not word.endswith(_plain_suffixes(rules)):
        return word
    # apostrophes not flanked by letters go now, so lookups see the final form
    word = _LOOSE_APOSTROPHE.sub("", word)
    if not word or depth > 8:
        return word
    expansion = table.get(word)
    if expansion is None:
        for suffix, repl in rules:
            stem = word[: -len(suffix)]
            if word.endswith(suffix) and stem and stem[-1].isalpha():
                expansion = stem + repl
                break
    if expansion is None:
        return word
    parts = []
    for piece in _NOT_ALLOWED.sub(" ", expansion).split():
        parts.append(_WORD_RUN.sub(lambda m: _expand_word(m.group(), table, rules, depth + 1), piece))
    return " ".join(parts)


def normalize_with_flags(text: str, cfg: NormalizerConfig = DEFAULT_CONFIG) -> tuple[str, bool]:
    """Normalize ``text``; the flag is True when a digit token was kept verbatim."""
    text = unicodedata.normalize("NFKD", text.replace("’", "'").replace("‘", "'"))
    text = "".join(c for c in text if not unicodedata.combining(c)).lower()

    prev = None
    while prev != text:
        prev, text = text, _BRACKETED.sub(" ", text)

    table, rules = cfg.contraction_table, cfg.suffix_rules
    text = _WORD_RUN.sub(lambda m: _expand_word(m.group(), table, rules), text)

    text = _NOT_ALLOWED.sub(" ", text)
    text = _LOOSE_APOSTROPHE.sub("", text)

    passthrough = False
    out = []
    for tok in text.split():
        if cfg.spell_numbers and _DIGITS.fullmatch(tok):
            n = int(tok)
            if n <= cfg.number_max:
                out.extend(spell_number(n, cfg.number_max).split())
                continue
        if cfg.remove_fillers and tok in cfg.filler_set:
            continue
        if any(c.isdigit() for c in tok):
            passthrough = True
        out.append(tok)
    return " ".join(out), passthrough


def normalize(text: str, cfg: NormalizerConfig = DEFAULT_CONFIG) -> str:
    return normalize_with_flags(text, cfg)[0]
