"""Exception types shared across the toolkit."""


class CorpusForgeError(Exception):
    """Base class for data errors (CLI exit code 3)."""


class ParseError(CorpusForgeError):
    def __init__(self, path, line_no: int, detail: str):
        self.path = str(path)
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"{self.path}:{line_no}: {detail}")


class DuplicateId(CorpusForgeError):
    def __init__(self, utterance_id: str, where: str = ""):
        self.utterance_id = utterance_id
        suffix = f" ({where})" if where else ""
        super().__init__(f"duplicate id {utterance_id!r}{suffix}")


class MissingHypotheses(CorpusForgeError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        shown = ", ".join(self.ids[:20])
        more = f" (+{len(self.ids) - 20} more)" if len(self.ids) > 20 else ""
        super().__init__(f"no hypothesis for {len(self.ids)} utterance(s): {shown}{more}")


class EmptyReference(CorpusForgeError):
    """The reference normalizes to zero tokens, so WER is undefined."""


class AudioError(CorpusForgeError):
    pass


class UnsupportedFormat(AudioError):
    pass


class MalformedHeader(AudioError):
    pass


class FormatMismatch(AudioError):
    def __init__(self, first, second, first_meta, second_meta):
        self.pair = (str(first), str(second))
        super().__init__(
            f"format mismatch between {first} "
            f"({first_meta.sample_rate_hz} Hz, {first_meta.channels} ch, {first_meta.bits_per_sample} bit) "
            f"and {second} "
            f"({second_meta.sample_rate_hz} Hz, {second_meta.channels} ch, {second_meta.bits_per_sample} bit)"
        )
