"""Unigram language-model subword tokenizer.

Training follows the usual seed -> EM -> prune loop:

* the seed vocabulary holds every single character plus the most frequent
  multi-character substrings (ranked by frequency x length);
* EM re-estimates token probabilities from expected counts computed by
  forward-backward over each word's segmentation lattice;
* pruning removes the multi-character tokens whose removal costs the least
  corpus log-likelihood.  Single characters are never removed.

Encoding picks the maximum-probability segmentation (Viterbi).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EmptyCorpus, TargetTooSmall, UnsegmentableWord, VocabFormatError

PAD_ID, UNK_ID = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
HEADER = "UNIGRAM v1"
TIE_TOL = 1e-12
NEG_INF = float("-inf")

# Expected-count floor for a single character that received no mass.
_CHAR_FLOOR = 1e-300


def _logsumexp(values) -> float:
    m = max(values)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(v - m) for v in values))


@dataclass
class UnigramModel:
    token_logprob: dict
    id_to_token: list = None
    token_to_id: dict = field(init=False)
    max_token_len: int = field(init=False)

    def __post_init__(self):
        if self.id_to_token is None:
            singles = sorted(t for t in self.token_logprob if len(t) == 1)
            multis = sorted(t for t in self.token_logprob if len(t) > 1)
            self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + singles + multis
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if set(self.id_to_token[2:]) != set(self.token_logprob) or len(self.token_to_id) != len(self.id_to_token):
            raise VocabFormatError("id table does not match the token set")
        self.max_token_len = max((len(t) for t in self.token_logprob), default=1)

    @classmethod
    def from_probs(cls, probs: dict) -> "UnigramModel":
        """Build a model from unnormalized non-negative weights."""
        # log(p) - log(total) survives denormal weights that p / total would flush to 0
        log_total = math.log(math.fsum(probs.values()))
        return cls({t: math.log(p) - log_total for t, p in probs.items()})

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def prob(self, token: str) -> float:
        return math.exp(self.token_logprob[token])

    def total_prob(self) -> float:
        return math.fsum(math.exp(v) for v in self.token_logprob.values())

    def single_chars(self) -> set:
        return {t for t in self.token_logprob if len(t) == 1}

    def edges(self, word: str):
        """Lattice edges ``(start, end, token)`` for every vocab token matching a span."""
        lp = self.token_logprob
        out = []
        for i in range(len(word)):
            for j in range(i + 1, min(len(word), i + self.max_token_len) + 1):
                piece = word[i:j]
                if piece in lp:
                    out.append((i, j, piece))
        return out

    def segment_word(self, word: str) -> list[str]:
        """Best segmentation; ties prefer fewer tokens, then leftmost-longest."""
        n = len(word)
        lp = self.token_logprob
        # best[i] = (score, n_tokens, end of first token) for the suffix word[i:]
        best = [None] * (n + 1)
        best[n] = (0.0, 0, n)
        for i in range(n - 1, -1, -1):
            cur = None
            if word[i] not in lp:
                score, ntok, _ = best[i + 1]
                cur = (score, ntok + 1, i + 1)
            else:
                for j in range(i + 1, min(n, i + self.max_token_len) + 1):
                    piece = word[i:j]
                    if piece not in lp or best[j] is None:
                        continue
                    score = lp[piece] + best[j][0]
                    ntok = best[j][1] + 1
                    if (
                        cur is None
                        or score > cur[0] + TIE_TOL
                        or (abs(score - cur[0]) <= TIE_TOL and (ntok < cur[1] or (ntok == cur[1] and j > cur[2])))
                    ):
                        cur = (score, ntok, j)
            best[i] = cur
        pieces = []
        i = 0
        while i < n:
            j = best[i][2]
            piece = word[i:j]
            pieces.append(piece if piece in lp else UNK_TOKEN)
            i = j
        return pieces

    def tokenize(self, text: str) -> list[str]:
        tokens = []
        for word in text.split():
            tokens.extend(self.segment_word(word))
        return tokens

    def encode(self, text: str) -> list[int]:
        lookup = self.token_to_id
        return [lookup.get(tok, UNK_ID) for tok in self.tokenize(text)]

    def save(self, path) -> None:
        lines = [HEADER]
        for idx, tok in enumerate(self.id_to_token):
            if idx >= 2:
                lines.append(f"{tok}\t{idx}\t{self.token_logprob[tok]:.17g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "UnigramModel":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != HEADER:
            raise VocabFormatError(f"{path}: missing `{HEADER}` header")
        id_to_token = [PAD_TOKEN, UNK_TOKEN] + [None] * (len(lines) - 1)
        logprob = {}
        for lineno, line in enumerate(lines[1:], start=2):
            cells = line.split("\t")
            if len(cells) != 3:
                raise VocabFormatError(f"{path}:{lineno}: expected token<TAB>id<TAB>logprob")
            tok, idx, value = cells[0], int(cells[1]), float(cells[2])
            if not 2 <= idx < len(id_to_token) or id_to_token[idx] is not None:
                raise VocabFormatError(f"{path}:{lineno}: ids must be contiguous from 2")
            id_to_token[idx] = tok
            logprob[tok] = value
        return cls(logprob, id_to_token)


def _check_corpus(word_counts):
    if not word_counts or not any(c > 0 for c in word_counts.values()):
        raise EmptyCorpus("word_counts is empty")
    for word in word_counts:
        if not word or any(ch.isspace() for ch in word):
            raise ValueError(f"invalid word {word!r}")


def _items(word_counts):
    return sorted((w, c) for w, c in word_counts.items() if c > 0)


def substring_counts(word_counts, max_token_len: int) -> Counter:
    freq = Counter()
    for word, count in _items(word_counts):
        n = len(word)
        for i in range(n):
            for j in range(i + 1, min(n, i + max_token_len) + 1):
                freq[word[i:j]] += count
    return freq


def seed_vocab(word_counts, seed_size: int, max_token_len: int = 8) -> UnigramModel:
    """Initial vocabulary: all characters plus the top multi-character substrings.

    Multi-character substrings need corpus frequency >= 2 and are ranked by
    frequency x length; they fill the ``seed_size - |chars|`` remaining slots.
    Probabilities start proportional to substring frequency.
    """
    _check_corpus(word_counts)
    freq = substring_counts(word_counts, max_token_len)
    chars = sorted(t for t in freq if len(t) == 1)
    if seed_size < len(chars):
        raise TargetTooSmall(f"seed_size {seed_size} below the {len(chars)} distinct characters")
    candidates = sorted(
        (t for t, f in freq.items() if len(t) > 1 and f >= 2),
        key=lambda t: (-freq[t] * len(t), t),
    )
    tokens = chars + candidates[: seed_size - len(chars)]
    return UnigramModel.from_probs({t: float(freq[t]) for t in tokens})


def _forward_backward(word: str, model: UnigramModel):
    n = len(word)
    lp = model.token_logprob
    edges = model.edges(word)
    alpha = [NEG_INF] * (n + 1)
    alpha[0] = 0.0
    incoming = [[] for _ in range(n + 1)]
    outgoing = [[] for _ in range(n + 1)]
    for e in edges:
        incoming[e[1]].append(e)
        outgoing[e[0]].append(e)
    for j in range(1, n + 1):
        terms = [alpha[i] + lp[t] for i, _, t in incoming[j]]
        alpha[j] = _logsumexp(terms) if terms else NEG_INF
    beta = [NEG_INF] * (n + 1)
    beta[n] = 0.0
    for i in range(n - 1, -1, -1):
        terms = [lp[t] + beta[j] for _, j, t in outgoing[i]]
        beta[i] = _logsumexp(terms) if terms else NEG_INF
    return edges, alpha, beta


def word_log_likelihood(word: str, model: UnigramModel) -> float:
    _, alpha, _ = _forward_backward(word, model)
    return alpha[-1]


def corpus_log_likelihood(model: UnigramModel, word_counts) -> float:
    return math.fsum(c * word_log_likelihood(w, model) for w, c in _items(word_counts))


def expected_counts(model: UnigramModel, word_counts):
    """E-step: expected token counts and corpus log-likelihood under ``model``."""
    lp = model.token_logprob
    counts = dict.fromkeys(lp, 0.0)
    loglik = []
    for word, c in _items(word_counts):
        edges, alpha, beta = _forward_backward(word, model)
        z = alpha[-1]
        if z == NEG_INF:
            raise UnsegmentableWord(f"no segmentation for {word!r}")
        loglik.append(c * z)
        for i, j, t in edges:
            counts[t] += c * math.exp(alpha[i] + lp[t] + beta[j] - z)
    return counts, math.fsum(loglik)


def em_step(model: UnigramModel, word_counts):
    """One EM iteration; returns ``(updated model, pre-update log-likelihood)``.

    Multi-character tokens with zero expected count leave the vocabulary.
    """
    counts, loglik = expected_counts(model, word_counts)
    kept = {}
    for tok, c in counts.items():
        if c > 0.0:
            kept[tok] = c
        elif len(tok) == 1:
            kept[tok] = _CHAR_FLOOR
    return UnigramModel.from_probs(kept), loglik


def _length_posterior(word: str, model: UnigramModel):
    """Return ``log P(word)`` and ``q[k] = P(k tokens | word)`` for k = 0..len(word)."""
    n = len(word)
    lp = model.token_logprob
    alpha = [None] * (n + 1)
    alpha[0] = np.full(n + 1, -np.inf)
    alpha[0][0] = 0.0
    incoming = [[] for _ in range(n + 1)]
    for i, j, t in model.edges(word):
        incoming[j].append((i, t))
    for j in range(1, n + 1):
        acc = np.full(n + 1, -np.inf)
        for i, t in incoming[j]:
            shifted = np.full(n + 1, -np.inf)
            shifted[1:] = alpha[i][:-1] + lp[t]
            acc = np.logaddexp(acc, shifted)
        alpha[j] = acc
    final = alpha[n]
    m = final.max()
    logz = m + math.log(np.exp(final - m).sum())
    return logz, np.exp(final - logz)


def token_losses(model: UnigramModel, word_counts) -> dict:
    """Log-likelihood lost by removing each multi-character token.

    ``loss(t) = L(full vocab) - L(vocab without t, remaining probabilities
    renormalized)``.  Words that cannot contain ``t`` are handled in closed
    form: renormalizing scales a k-token segmentation by ``(1 - p_t)^-k``, so
    only the posterior over segmentation lengths is needed.  Words containing
    ``t`` are re-scored with a direct forward pass.
    """
    items = _items(word_counts)
    multis = sorted(t for t in model.token_logprob if len(t) > 1)
    if not multis:
        return {}
    width = max(len(w) for w, _ in items) + 1
    weights = np.array([c for _, c in items], dtype=float)
    logz = np.empty(len(items))
    logq = np.full((len(items), width), -np.inf)
    containing = {t: [] for t in multis}
    for row, (word, _) in enumerate(items):
        z, q = _length_posterior(word, model)
        logz[row] = z
        with np.errstate(divide="ignore"):
            logq[row, : len(q)] = np.log(q)
        for t in {t for _, _, t in model.edges(word) if len(t) > 1}:
            containing[t].append(row)
    full = math.fsum(weights * logz)

    p = np.array([model.prob(t) for t in multis])
    # closed form needs 1 - p_t > 0; near-certain tokens are re-scored directly
    direct = p > 1.0 - 1e-12
    log_r = -np.log1p(-np.where(direct, 0.0, p))
    ks = np.arange(width, dtype=float)
    shift = np.empty((len(items), len(multis)))
    chunk = max(1, int(2e7 // max(1, len(items) * width)))
    for start in range(0, len(multis), chunk):
        stop = start + chunk
        a = logq[:, :, None] + ks[None, :, None] * log_r[None, None, start:stop]
        m = a.max(axis=1)
        shift[:, start:stop] = m + np.log(np.exp(a - m[:, None, :]).sum(axis=1))
    without = logz[:, None] + shift

    losses = {}
    for col, t in enumerate(multis):
        if direct[col]:
            reduced = _without_token(model, t)
            losses[t] = full - math.fsum(c * word_log_likelihood(w, reduced) for w, c in items)
            continue
        rows = containing[t]
        total = math.fsum(weights * without[:, col])
        if rows:
            reduced = _without_token(model, t)
            total -= math.fsum(weights[r] * without[r, col] for r in rows)
            total += math.fsum(weights[r] * word_log_likelihood(items[r][0], reduced) for r in rows)
        losses[t] = full - total
    return losses


def _without_token(model: UnigramModel, token: str) -> UnigramModel:
    probs = {t: math.exp(v) for t, v in model.token_logprob.items() if t != token}
    return UnigramModel.from_probs(probs)


def prune(model: UnigramModel, word_counts, drop_fraction: float = 0.2, keep_at_least: int = 0) -> UnigramModel:
    """Drop the ``drop_fraction`` of multi-character tokens with the smallest loss.

    ``keep_at_least`` bounds the number of surviving (non-special) tokens so a
    final round does not overshoot a vocabulary target.
    """
    if not 0.0 < drop_fraction < 1.0:
        raise ValueError(f"drop_fraction must lie in (0, 1), got {drop_fraction}")
    losses = token_losses(model, word_counts)
    if not losses:
        return model
    n_drop = max(1, int(math.floor(drop_fraction * len(losses) + 1e-9)))
    n_drop = min(n_drop, len(model.token_logprob) - keep_at_least, len(losses))
    if n_drop <= 0:
        return model
    ranked = sorted(losses, key=lambda t: (losses[t], t))
    dropped = set(ranked[:n_drop])
    probs = {t: math.exp(v) for t, v in model.token_logprob.items() if t not in dropped}
    return UnigramModel.from_probs(probs)


def train_unigram(
    word_counts,
    target_vocab_size: int,
    em_rounds_per_prune: int = 2,
    drop_fraction: float = 0.2,
    seed_size: int | None = None,
    max_token_len: int = 8,
    callback=None,
) -> UnigramModel:
    """Seed, then alternate EM rounds and pruning until the target size is met.

    ``target_vocab_size`` counts the PAD and UNK ids.  ``callback(phase, model,
    loglik)`` is invoked after every EM step (``"em"``), prune (``"prune"``)
    and final EM step (``"final"``); ``loglik`` is ``None`` for prunes.
    """
    _check_corpus(word_counts)
    n_chars = len({ch for w, c in word_counts.items() if c > 0 for ch in w})
    if target_vocab_size < n_chars + 2:
        raise TargetTooSmall(f"target vocab size {target_vocab_size} below {n_chars} characters + 2 specials")
    if em_rounds_per_prune < 1:
        raise ValueError("em_rounds_per_prune must be >= 1")
    if seed_size is None:
        seed_size = max(2 * (target_vocab_size - 2), n_chars)

    def notify(phase, m, loglik=None):
        if callback is not None:
            callback(phase, m, loglik)

    model = seed_vocab(word_counts, seed_size, max_token_len)
    notify("seed", model)
    while model.vocab_size > target_vocab_size:
        for _ in range(em_rounds_per_prune):
            model, loglik = em_step(model, word_counts)
            notify("em", model, loglik)
        if model.vocab_size <= target_vocab_size:
            break
        pruned = prune(model, word_counts, drop_fraction, keep_at_least=target_vocab_size - 2)
        if pruned.vocab_size == model.vocab_size:
            break
        model = pruned
        notify("prune", model)
    for _ in range(em_rounds_per_prune):
        model, loglik = em_step(model, word_counts)
        notify("final", model, loglik)
    return model


def viterbi_encode(text: str, model: UnigramModel) -> list[int]:
    return model.encode(text)
