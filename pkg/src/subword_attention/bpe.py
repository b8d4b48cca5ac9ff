"""Character-level byte pair encoding with an explicit word-end symbol."""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import EmptyCorpus, TargetTooSmall, UnknownId, VocabFormatError

WORD_END = "</w>"
PAD_ID, UNK_ID = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
UNK_CHAR = "·"
HEADER = "BPE v1"

# The word-end marker compares greater than every real character.
_MARKER_KEY = "\U0010ffff"


def symbol_key(token: str) -> str:
    """Sort key for tie-breaking: plain string order with ``</w>`` last."""
    return token.replace(WORD_END, _MARKER_KEY)


def pair_key(pair):
    return symbol_key(pair[0]), symbol_key(pair[1])


def symbolize(word: str) -> list[str]:
    return list(word) + [WORD_END]


def merge_pair(symbols, pair) -> list[str]:
    """Merge every non-overlapping occurrence of ``pair``, scanning left to right."""
    a, b = pair
    out = []
    i, n = 0, len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


@dataclass
class BpeModel:
    merges: list
    id_to_token: list
    word_end_marker: str = WORD_END
    token_to_id: dict = field(init=False)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise VocabFormatError("duplicate tokens in vocabulary")
        self._ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self._cache = {}

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def segment_word(self, word: str) -> list[str]:
        """Replay the merges in training order on one word."""
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = symbolize(word)
        ranks = self._ranks
        last = -1
        while len(symbols) > 1:
            best = None
            for pair in zip(symbols, symbols[1:]):
                rank = ranks.get(pair)
                if rank is not None and rank > last and (best is None or rank < best):
                    best = rank
            if best is None:
                break
            symbols = merge_pair(symbols, self.merges[best])
            last = best
        self._cache[word] = symbols
        return symbols

    def tokenize(self, text: str) -> list[str]:
        tokens = []
        for word in text.split():
            tokens.extend(self.segment_word(word))
        return tokens

    def encode(self, text: str) -> list[int]:
        lookup = self.token_to_id
        return [lookup.get(tok, UNK_ID) for tok in self.tokenize(text)]

    def decode(self, ids) -> str:
        parts = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.id_to_token):
                raise UnknownId(f"id {i} outside vocabulary of size {len(self.id_to_token)}")
            if i == PAD_ID:
                continue
            parts.append(UNK_CHAR if i == UNK_ID else self.id_to_token[i])
        return "".join(parts).replace(self.word_end_marker, " ").strip()

    def save(self, path) -> None:
        lines = [HEADER, f"#merges {len(self.merges)}"]
        lines += [f"{a}\t{b}" for a, b in self.merges]
        lines.append(f"#vocab {len(self.id_to_token)}")
        lines += [f"{tok}\t{i}" for i, tok in enumerate(self.id_to_token)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeModel":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != HEADER:
            raise VocabFormatError(f"{path}: missing `{HEADER}` header")
        try:
            n_merges = int(lines[1].removeprefix("#merges "))
            merges = [tuple(line.split("\t")) for line in lines[2 : 2 + n_merges]]
            vocab_line = 2 + n_merges
            n_vocab = int(lines[vocab_line].removeprefix("#vocab "))
            rows = [line.split("\t") for line in lines[vocab_line + 1 :]]
        except (IndexError, ValueError) as exc:
            raise VocabFormatError(f"{path}: malformed BPE vocab file ({exc})") from None
        if any(len(m) != 2 for m in merges) or len(rows) != n_vocab or any(len(r) != 2 for r in rows):
            raise VocabFormatError(f"{path}: malformed BPE vocab file")
        id_to_token = [None] * n_vocab
        for tok, idx in rows:
            idx = int(idx)
            if not 0 <= idx < n_vocab or id_to_token[idx] is not None:
                raise VocabFormatError(f"{path}: ids must be contiguous from 0")
            id_to_token[idx] = tok
        return cls(merges=merges, id_to_token=id_to_token)


def _check_corpus(word_counts):
    if not word_counts or not any(c > 0 for c in word_counts.values()):
        raise EmptyCorpus("word_counts is empty")
    for word, count in word_counts.items():
        if not word or any(ch.isspace() for ch in word):
            raise ValueError(f"invalid word {word!r}")
        if count < 0:
            raise ValueError(f"negative count for {word!r}")


def base_symbols(word_counts) -> list[str]:
    chars = sorted({ch for w, c in word_counts.items() if c > 0 for ch in w})
    return chars + [WORD_END]


def _pairs(symbols):
    return zip(symbols, symbols[1:])


def train_bpe(word_counts, target_vocab_size: int) -> BpeModel:
    """Learn merges until the vocabulary reaches ``target_vocab_size``.

    Each round merges the adjacent pair with the highest count-weighted
    frequency (ties: lexicographically smallest pair, ``</w>`` ordered last).
    Training stops early when the best pair occurs fewer than twice.
    """
    _check_corpus(word_counts)
    symbols = base_symbols(word_counts)
    id_to_token = [PAD_TOKEN, UNK_TOKEN] + symbols
    if target_vocab_size < len(id_to_token):
        raise TargetTooSmall(
            f"target vocab size {target_vocab_size} below base vocabulary of {len(id_to_token)}"
        )
    known = set(id_to_token)

    items = sorted((w, c) for w, c in word_counts.items() if c > 0)
    words = [symbolize(w) for w, _ in items]
    counts = [c for _, c in items]

    pair_counts = Counter()
    where = defaultdict(set)
    for idx, syms in enumerate(words):
        for pair in _pairs(syms):
            pair_counts[pair] += counts[idx]
            where[pair].add(idx)
    heap = [(-c, *pair_key(p), p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges = []
    while len(id_to_token) < target_vocab_size:
        best = None
        while heap:
            neg, _, _, pair = heap[0]
            if pair_counts.get(pair, 0) == -neg:
                best = pair
                break
            heapq.heappop(heap)
        if best is None or pair_counts[best] < 2:
            break
        merges.append(best)
        merged = best[0] + best[1]
        if merged not in known:
            known.add(merged)
            id_to_token.append(merged)

        touched = set()
        for idx in sorted(where.pop(best, ())):
            old = words[idx]
            new = merge_pair(old, best)
            if len(new) == len(old):
                continue
            c = counts[idx]
            for pair in _pairs(old):
                pair_counts[pair] -= c
                touched.add(pair)
            for pair in _pairs(new):
                pair_counts[pair] += c
                where[pair].add(idx)
                touched.add(pair)
            words[idx] = new
        for pair in touched:
            c = pair_counts[pair]
            if c <= 0:
                del pair_counts[pair]
                where.pop(pair, None)
            else:
                heapq.heappush(heap, (-c, *pair_key(pair), pair))
    return BpeModel(merges=merges, id_to_token=id_to_token)


def encode_bpe(text: str, model: BpeModel) -> list[int]:
    return model.encode(text)


def decode_bpe(ids, model: BpeModel) -> str:
    return model.decode(ids)
