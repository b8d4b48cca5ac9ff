"""Seeded generator for small Hinglish-style 3-class corpora.

Used for the bundled toy corpus and for exercising the full pipeline without
access to the real datasets.  Each class has its own keyword pool; keywords
land at the start or the end of a post so both padding channels matter.
Hate-inducing posts target the placeholder group ``groupx``.
"""
from __future__ import annotations

import numpy as np

from .corpus import LabeledSample

FILLER = ["yaar", "ye", "kya", "hai", "tum", "aur", "sab", "toh", "na", "re", "bhi", "abhi", "ab", "wo", "mera"]

KEYWORDS = {
    0: ["aaj", "mausam", "accha", "chai", "dost", "match", "dekha", "movie", "khana", "maza", "aaya",
        "happy", "birthday", "thanks", "morning", "payment", "kamaya", "party", "shaadi", "gaana"],
    1: ["pagal", "bewakoof", "gadha", "ullu", "nalayak", "kamina", "idiot", "stupid", "loser", "bakwas",
        "chup", "nikamma", "jhootha", "dhakkan", "faltu"],
    2: ["groupx", "nikalo", "desh", "bahar", "dushman", "hatao", "nafrat", "inko", "bhagao", "gaddar",
        "khilaf", "sabak", "sikhao"],
}

# raw-text decorations, stripped again by the preprocessing pipeline
_RAW_PREFIX = ["RT @user{} ", "@user{} ", "", ""]
_RAW_SUFFIX = [" 😂", " 😡", " #Nation", " http://t.co/x{}", " !!", "", ""]
_DEVANAGARI = {0: "दोस्त", 1: "पागल", 2: "देश"}


def make_sample(label: int, rng, raw: bool = False) -> LabeledSample:
    n_key = int(rng.integers(2, 4))
    n_fill = int(rng.integers(2, 6))
    keys = [KEYWORDS[label][i] for i in rng.choice(len(KEYWORDS[label]), size=n_key, replace=False)]
    fill = [FILLER[i] for i in rng.integers(0, len(FILLER), size=n_fill)]
    words = keys + fill if rng.random() < 0.5 else fill + keys
    if raw:
        if rng.random() < 0.3:
            words.insert(int(rng.integers(0, len(words) + 1)), _DEVANAGARI[label])
        tag = int(rng.integers(0, 1000))
        text = _RAW_PREFIX[rng.integers(0, len(_RAW_PREFIX))].format(tag)
        text += " ".join(w.capitalize() if rng.random() < 0.2 else w for w in words)
        text += _RAW_SUFFIX[rng.integers(0, len(_RAW_SUFFIX))].format(tag)
    else:
        text = " ".join(words)
    return LabeledSample(text, label)


def make_corpus(counts=(22, 21, 21), seed: int = 0, raw: bool = False) -> list[LabeledSample]:
    """``counts[c]`` samples of class ``c``, shuffled with ``seed``."""
    rng = np.random.default_rng(seed)
    samples = [make_sample(label, rng, raw) for label, n in enumerate(counts) for _ in range(n)]
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]
