"""Subword tokenizers and a dual-channel self-attention classifier for
code-switched (Hinglish) abusive-text detection."""

__version__ = "0.1.0"

LABEL_NAMES = ("non-abusive", "abusive", "hate-inducing")
