"""Labeled dataset loading, splitting and class counts.

Dataset files are UTF-8 TSV with a mandatory ``text<TAB>label`` header and one
record per line.  Labels are integer ids or (case-insensitive) class names.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import LABEL_NAMES
from .exceptions import EmptyText, MalformedRow, TooFewSamples, UnknownLabel

HEADER = ("text", "label")

_LABEL_ALIASES = {re.sub(r"[\s_-]+", "", name): i for i, name in enumerate(LABEL_NAMES)}


@dataclass(frozen=True)
class LabeledSample:
    text: str
    label: int

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyText("text is empty")
        if self.label not in (0, 1, 2):
            raise UnknownLabel(f"label {self.label!r} outside {{0, 1, 2}}")


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    test: list
    seed: int
    test_fraction: float


def parse_label(raw: str) -> int:
    """Map a label cell to a class id; accepts ``0/1/2`` or a class name."""
    value = raw.strip()
    if value.isdigit():
        label = int(value)
        if label in (0, 1, 2):
            return label
        raise UnknownLabel(f"unknown label {raw!r}")
    key = re.sub(r"[\s_-]+", "", value.lower())
    if key in _LABEL_ALIASES:
        return _LABEL_ALIASES[key]
    raise UnknownLabel(f"unknown label {raw!r}")


def load_dataset(path, format: str = "tsv") -> list[LabeledSample]:
    if format != "tsv":
        raise ValueError(f"unsupported dataset format {format!r}")
    with open(Path(path), encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedRow("missing header `text<TAB>label`", line=1)
    header = tuple(c.strip().lower() for c in lines[0].rstrip("\r").split("\t"))
    if header != HEADER:
        raise MalformedRow(f"expected header `text<TAB>label`, got {lines[0]!r}", line=1)

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        cells = line.split("\t")
        if len(cells) != 2:
            raise MalformedRow(f"expected 2 columns, found {len(cells)}", line=lineno)
        text, raw_label = cells
        if not text.strip():
            raise EmptyText("empty text", line=lineno)
        try:
            label = parse_label(raw_label)
        except UnknownLabel as exc:
            raise UnknownLabel(str(exc), line=lineno) from None
        samples.append(LabeledSample(text, label))
    return samples


def save_dataset(samples, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("text\tlabel\n")
        for s in samples:
            if "\t" in s.text or "\n" in s.text:
                raise MalformedRow(f"text contains a tab or newline: {s.text!r}")
            fh.write(f"{s.text}\t{s.label}\n")


def split_dataset(samples, test_fraction: float = 0.2, seed: int = 0) -> DatasetSplit:
    """Seeded uniform shuffle split; ``|test| = round(test_fraction * n)``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    samples = list(samples)
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples to split, got {len(samples)}")
    n_test = int(math.floor(test_fraction * len(samples) + 0.5))
    order = np.random.default_rng(seed).permutation(len(samples))
    test = [samples[i] for i in order[:n_test]]
    train = [samples[i] for i in order[n_test:]]
    return DatasetSplit(train=train, test=test, seed=seed, test_fraction=test_fraction)


def class_distribution(samples) -> dict[int, int]:
    counts = {0: 0, 1: 0, 2: 0}
    for s in samples:
        counts[s.label] += 1
    return counts
