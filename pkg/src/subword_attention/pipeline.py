"""Glue between the stages: preprocessing datasets, word counts, tokenizer fitting."""
from __future__ import annotations

from collections import Counter

from .bpe import BpeModel, train_bpe
from .corpus import LabeledSample
from .nn import ModelConfig
from .preprocess import PreprocessConfig, preprocess
from .unigram import UnigramModel, train_unigram

DEFAULT_BPE_VOCAB = 8000
DEFAULT_UNI_VOCAB = 8000


def preprocess_samples(samples, config: PreprocessConfig | None = None) -> list[LabeledSample]:
    """Normalize every text; samples whose text becomes empty are dropped."""
    out = []
    for s in samples:
        text = preprocess(s.text, config)
        if text:
            out.append(LabeledSample(text, s.label))
    return out


def word_counts(texts) -> Counter:
    counts = Counter()
    for text in texts:
        counts.update(text.split())
    return counts


def fit_bpe(texts, vocab_size: int = DEFAULT_BPE_VOCAB) -> BpeModel:
    return train_bpe(word_counts(texts), vocab_size)


def fit_unigram(texts, vocab_size: int = DEFAULT_UNI_VOCAB, **kwargs) -> UnigramModel:
    return train_unigram(word_counts(texts), vocab_size, **kwargs)


def model_config_for(bpe: BpeModel, uni: UnigramModel, **overrides) -> ModelConfig:
    return ModelConfig(bpe_vocab_size=bpe.vocab_size, uni_vocab_size=uni.vocab_size, **overrides)
