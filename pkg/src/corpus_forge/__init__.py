"""Corpus curation and WER scoring for children's-speech ASR fine-tuning data."""

__version__ = "0.1.0"
