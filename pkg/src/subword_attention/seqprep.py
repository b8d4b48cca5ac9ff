"""Fixed-length two-channel inputs: pre-padded BPE ids and post-padded Unigram ids.

Pre-padding truncates from the front and so keeps the end of a sentence;
post-padding keeps its start.  Feeding both lets the classifier see either
end of an over-length post.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAD_ID = 0


@dataclass(frozen=True)
class EncodedPair:
    bpe_ids: tuple
    uni_ids: tuple
    label: int | None = None

    def __post_init__(self):
        if len(self.bpe_ids) != len(self.uni_ids):
            raise ValueError("both channels must have the same length")


def pad_or_truncate(ids, max_len: int, mode: str, pad_id: int = PAD_ID) -> list[int]:
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = list(ids)
    if mode == "pre":
        ids = ids[-max_len:]
        return [pad_id] * (max_len - len(ids)) + ids
    if mode == "post":
        ids = ids[:max_len]
        return ids + [pad_id] * (max_len - len(ids))
    raise ValueError(f"mode must be 'pre' or 'post', got {mode!r}")


def encode_dual(text: str, bpe, uni, max_len: int, label: int | None = None) -> EncodedPair:
    return EncodedPair(
        bpe_ids=tuple(pad_or_truncate(bpe.encode(text), max_len, "pre")),
        uni_ids=tuple(pad_or_truncate(uni.encode(text), max_len, "post")),
        label=label,
    )


def encode_batch(texts, bpe, uni, max_len: int):
    """Stack encodings of ``texts`` into two ``[n, max_len]`` integer arrays."""
    pairs = [encode_dual(t, bpe, uni, max_len) for t in texts]
    bpe_ids = np.array([p.bpe_ids for p in pairs], dtype=np.int64).reshape(len(pairs), max_len)
    uni_ids = np.array([p.uni_ids for p in pairs], dtype=np.int64).reshape(len(pairs), max_len)
    return bpe_ids, uni_ids
