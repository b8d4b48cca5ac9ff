"""Optimizers, the training loop, evaluation metrics and checkpoints."""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import LABEL_NAMES
from .exceptions import ConfigError, CorruptCheckpoint, EmptyEvalSet, IoFailure, ShapeMismatch
from .nn import PARAM_NAMES, PROB_FLOOR, ModelConfig, ParameterSet, backward_batch, forward_batch, init_params
from .seqprep import encode_batch

logger = logging.getLogger(__name__)

MAGIC = b"ATSN"
CHECKPOINT_VERSION = 1

__all__ = [
    "AdamState",
    "EvalReport",
    "TrainConfig",
    "adam_step",
    "confusion_matrix",
    "evaluate",
    "load_checkpoint",
    "predict_proba",
    "report_from_confusion",
    "save_checkpoint",
    "sgd_step",
    "train",
    "train_arrays",
    "xent_loss",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def xent_loss(probs, label) -> float:
    """Sparse categorical cross-entropy ``-log p[label]``, ``p`` clamped at 1e-12."""
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


@dataclass
class AdamState:
    m: ParameterSet
    v: ParameterSet
    step: int = 0

    @classmethod
    def zeros(cls, params: ParameterSet) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def _check_same_shapes(*sets):
    for name in PARAM_NAMES:
        shapes = {getattr(s, name).shape for s in sets}
        if len(shapes) != 1:
            raise ShapeMismatch(f"{name}: shapes disagree {sorted(shapes)}")


def adam_step(params: ParameterSet, grads: ParameterSet, state: AdamState, config: TrainConfig):
    """Bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    _check_same_shapes(params, grads, state.m, state.v)
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return params, state


def sgd_step(params: ParameterSet, grads: ParameterSet, config: TrainConfig):
    _check_same_shapes(params, grads)
    for name, p in params.items():
        p -= config.learning_rate * getattr(grads, name)
    return params


def train_arrays(bpe_ids, uni_ids, labels, model_config: ModelConfig, train_config: TrainConfig, callback=None):
    """Minibatch training on pre-encoded arrays.

    All randomness (init, shuffling, dropout) comes from one generator seeded
    with ``train_config.seed``.  Returns the parameters and the mean training
    loss of each epoch.
    """
    bpe_ids = np.asarray(bpe_ids, dtype=np.int64)
    uni_ids = np.asarray(uni_ids, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if n == 0:
        raise ValueError("no training samples")
    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config, rng)
    state = AdamState.zeros(params)
    losses = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            grads, loss = backward_batch(
                bpe_ids[idx], uni_ids[idx], labels[idx], params, model_config, training=True, rng=rng
            )
            if train_config.optimizer == "adam":
                adam_step(params, grads, state, train_config)
            else:
                sgd_step(params, grads, train_config)
            total += loss * len(idx)
        losses.append(total / n)
        logger.info("epoch %d/%d loss %.6f", epoch + 1, train_config.epochs, losses[-1])
        if callback is not None:
            callback(epoch, losses[-1], params)
    return params, losses


def _texts_and_labels(samples):
    return [s.text for s in samples], np.array([s.label for s in samples], dtype=np.int64)


def train(split, tokenizers, model_config: ModelConfig, train_config: TrainConfig, callback=None):
    """Train on ``split.train`` (or a plain sample list) with frozen tokenizers."""
    samples = split.train if hasattr(split, "train") else list(split)
    bpe, uni = tokenizers
    if model_config.bpe_vocab_size < bpe.vocab_size or model_config.uni_vocab_size < uni.vocab_size:
        raise ConfigError("model vocabulary sizes are smaller than the tokenizers'")
    texts, labels = _texts_and_labels(samples)
    bpe_ids, uni_ids = encode_batch(texts, bpe, uni, model_config.max_len)
    return train_arrays(bpe_ids, uni_ids, labels, model_config, train_config, callback=callback)


def predict_proba(texts, tokenizers, params: ParameterSet, config: ModelConfig, chunk: int = 256) -> np.ndarray:
    bpe, uni = tokenizers
    texts = list(texts)
    out = np.zeros((len(texts), config.n_classes))
    for start in range(0, len(texts), chunk):
        b, u = encode_batch(texts[start : start + chunk], bpe, uni, config.max_len)
        out[start : start + chunk] = forward_batch(b, u, params, config)
    return out


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: tuple

    @property
    def total(self) -> int:
        return int(sum(sum(row) for row in self.confusion))

    def headline(self) -> str:
        return f"accuracy {100 * self.accuracy:.2f}, F1 {self.weighted_f1:.3f}"

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "n": self.total,
            "confusion": [list(row) for row in self.confusion],
        }

    def render(self, model_name: str = "Attention + BPE (Pre) + Unigram (Post)") -> str:
        """Plain-text table (accuracy in percent) followed by a key=value block."""
        name_w = max(len(model_name), len("Model"))
        lines = [
            f"{'Model':<{name_w}}  {'Accuracy':>8}  {'F1':>6}  {'Precision':>9}  {'Recall':>6}",
            f"{model_name:<{name_w}}  {100 * self.accuracy:>8.2f}  {self.weighted_f1:>6.3f}  "
            f"{self.weighted_precision:>9.3f}  {self.weighted_recall:>6.3f}",
            "",
            "confusion (rows = true, columns = predicted)",
        ]
        label_w = max(len(n) for n in LABEL_NAMES)
        lines.append(" " * label_w + "  " + "  ".join(f"{n:>{label_w}}" for n in LABEL_NAMES))
        for name, row in zip(LABEL_NAMES, self.confusion):
            lines.append(f"{name:>{label_w}}  " + "  ".join(f"{c:>{label_w}d}" for c in row))
        lines.append("")
        lines.append("[metrics]")
        for key in ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1"):
            lines.append(f"{key}={getattr(self, key):.17g}")
        lines.append(f"n={self.total}")
        lines.append("confusion=" + ";".join(",".join(str(c) for c in row) for row in self.confusion))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "EvalReport":
        """Read back the key=value block written by :meth:`render`."""
        values = {}
        in_block = False
        for line in text.splitlines():
            if line.strip() == "[metrics]":
                in_block = True
            elif in_block and "=" in line:
                k, v = line.split("=", 1)
                values[k] = v
        confusion = tuple(tuple(int(c) for c in row.split(",")) for row in values["confusion"].split(";"))
        return cls(
            accuracy=float(values["accuracy"]),
            weighted_precision=float(values["weighted_precision"]),
            weighted_recall=float(values["weighted_recall"]),
            weighted_f1=float(values["weighted_f1"]),
            confusion=confusion,
        )


def confusion_matrix(labels, predictions, n_classes: int = 3) -> np.ndarray:
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return conf


def report_from_confusion(confusion) -> EvalReport:
    """Support-weighted precision / recall / F1 from a ``[true, predicted]`` count matrix."""
    conf = np.asarray(confusion, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise EmptyEvalSet("no samples to evaluate")
    tp = np.diag(conf).astype(float)
    support = conf.sum(axis=1).astype(float)
    predicted = conf.sum(axis=0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    weights = support / total
    accuracy = float(tp.sum() / total)
    return EvalReport(
        accuracy=accuracy,
        weighted_precision=float(weights @ precision),
        # support weights cancel: sum_c (s_c / T)(tp_c / s_c) = sum_c tp_c / T
        weighted_recall=accuracy,
        weighted_f1=float(weights @ f1),
        confusion=tuple(tuple(int(c) for c in row) for row in conf),
    )


def evaluate(samples, tokenizers, params: ParameterSet, config: ModelConfig) -> EvalReport:
    samples = list(samples)
    if not samples:
        raise EmptyEvalSet("evaluation set is empty")
    texts, labels = _texts_and_labels(samples)
    probs = predict_proba(texts, tokenizers, params, config)
    # argmax returns the first maximum, i.e. ties go to the lower class id
    predictions = probs.argmax(axis=1)
    return report_from_confusion(confusion_matrix(labels, predictions, config.n_classes))


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(params: ParameterSet, model_config: ModelConfig, path, train_config: TrainConfig | None = None) -> None:
    """Write ``ATSN | u32 version | u32 header length | JSON header | float32 data``.

    Tensors are stored as little-endian float32, so round trips are bit-exact
    for float32 parameters.
    """
    params.check(model_config)
    header = {
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()],
        "model_config": model_config.to_dict(),
        "train_config": train_config.to_dict() if train_config is not None else None,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
    chunks += [np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in params.items()]
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Return ``(params, model_config, train_config)``; params are float32."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic bytes")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported checkpoint version {version}")
    if 12 + header_len > len(blob):
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
        model_config = ModelConfig.from_dict(header["model_config"])
        train_config = TrainConfig.from_dict(header["train_config"]) if header.get("train_config") else None
        specs = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header ({exc})") from None
    if [name for name, _ in specs] != list(PARAM_NAMES):
        raise CorruptCheckpoint(f"{path}: unexpected tensor list")
    expected = 12 + header_len + 4 * sum(math.prod(shape) for _, shape in specs)
    if len(blob) != expected:
        raise CorruptCheckpoint(f"{path}: expected {expected} bytes, found {len(blob)}")
    offset = 12 + header_len
    tensors = {}
    for name, shape in specs:
        count = math.prod(shape)
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset += 4 * count
    params = ParameterSet(**tensors)
    try:
        params.check(model_config)
    except ShapeMismatch as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None
    return params, model_config, train_config
