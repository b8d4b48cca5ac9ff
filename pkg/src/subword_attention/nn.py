"""Dense numpy layers for the dual-channel attention classifier.

Architecture, per channel (BPE and Unigram):

    ids -> embedding + sinusoidal position -> multi-head self-attention -> mean over positions

The two pooled vectors are concatenated and passed through
``dense(ReLU) -> inverted dropout -> dense -> softmax``.  Attention and output
projection weights are shared by both channels; each channel has its own
embedding table.  Backward passes are written out by hand and checked against
finite differences in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .exceptions import ConfigError, OddDimension, ShapeMismatch

PROB_FLOOR = 1e-12

PARAM_NAMES = (
    "embed_bpe",
    "embed_uni",
    "w_q",
    "w_k",
    "w_v",
    "w_o",
    "dense1_w",
    "dense1_b",
    "out_w",
    "out_b",
)


@dataclass(frozen=True)
class ModelConfig:
    max_len: int = 64
    bpe_vocab_size: int = 8000
    uni_vocab_size: int = 8000
    d_model: int = 64
    n_heads: int = 8
    dense_units: int = 128
    dropout_rate: float = 0.2
    n_classes: int = 3
    pe_base: float = 10000.0
    # ablation hook: False replaces the positional encoding by zeros
    use_positional_encoding: bool = True

    def __post_init__(self):
        for name in ("max_len", "bpe_vocab_size", "uni_vocab_size", "d_model", "n_heads", "dense_units", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for sinusoidal encodings, got {self.d_model}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.pe_base <= 0:
            raise ConfigError("pe_base must be positive")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def param_shapes(self) -> dict:
        d, h, dk = self.d_model, self.n_heads, self.d_k
        return {
            "embed_bpe": (self.bpe_vocab_size, d),
            "embed_uni": (self.uni_vocab_size, d),
            "w_q": (h, d, dk),
            "w_k": (h, d, dk),
            "w_v": (h, d, dk),
            "w_o": (d, d),
            "dense1_w": (2 * d, self.dense_units),
            "dense1_b": (self.dense_units,),
            "out_w": (self.dense_units, self.n_classes),
            "out_b": (self.n_classes,),
        }


@dataclass
class ParameterSet:
    """All trainable tensors.  ``w_q/w_k/w_v`` stack the per-head projections."""

    embed_bpe: np.ndarray
    embed_uni: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def items(self):
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet(**{k: np.zeros_like(v) for k, v in self.items()})

    def copy(self) -> "ParameterSet":
        return ParameterSet(**{k: v.copy() for k, v in self.items()})

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(**{k: v.astype(dtype) for k, v in self.items()})

    def check(self, config: ModelConfig) -> None:
        for name, shape in config.param_shapes().items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeMismatch(f"{name}: expected shape {shape}, got {got}")


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: ModelConfig, rng) -> ParameterSet:
    """Glorot-uniform projection matrices, zero biases.

    Embedding rows are drawn from U(-1, 1), the same range as the sinusoidal
    encoding added to them; Glorot scaling with the vocabulary as fan-in would
    leave token identity buried under the position signal.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    shapes = config.param_shapes()
    d, dk = config.d_model, config.d_k
    fans = {
        "w_q": (d, dk),
        "w_k": (d, dk),
        "w_v": (d, dk),
        "w_o": (d, d),
        "dense1_w": (2 * d, config.dense_units),
        "out_w": (config.dense_units, config.n_classes),
    }
    values = {}
    for name in PARAM_NAMES:
        if name.startswith("embed_"):
            values[name] = rng.uniform(-1.0, 1.0, size=shapes[name])
        elif name in fans:
            values[name] = _glorot(rng, shapes[name], *fans[name])
        else:
            values[name] = np.zeros(shapes[name])
    return ParameterSet(**values)


def positional_encoding(max_len: int, d_model: int, base: float = 10000.0) -> np.ndarray:
    if d_model % 2:
        raise OddDimension(f"d_model must be even, got {d_model}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(float(base), two_i / d_model)
    pe = np.empty((max_len, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def scaled_dot_attention(Q, K, V, return_weights: bool = False):
    """``softmax(Q K^T / sqrt(d_k)) V`` over the last two axes."""
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ShapeMismatch(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    scores = (Q @ np.swapaxes(K, -1, -2)) / math.sqrt(Q.shape[-1])
    weights = softmax(scores, axis=-1)
    out = weights @ V
    return (out, weights) if return_weights else out


def _split_heads_forward(X, params):
    Xh = X[..., None, :, :]
    return Xh @ params.w_q, Xh @ params.w_k, Xh @ params.w_v


def _merge_heads(H):
    # [..., h, n, d_k] -> [..., n, h * d_k]
    H = np.swapaxes(H, -3, -2)
    return H.reshape(*H.shape[:-2], H.shape[-2] * H.shape[-1])


def multi_head_attention(X, params: ParameterSet) -> np.ndarray:
    """``Concat(head_1..head_h) W_o`` with ``head_i = Attention(X Wq_i, X Wk_i, X Wv_i)``."""
    if X.shape[-1] != params.w_q.shape[1]:
        raise ShapeMismatch(f"input has {X.shape[-1]} features, projections expect {params.w_q.shape[1]}")
    Q, K, V = _split_heads_forward(X, params)
    return _merge_heads(scaled_dot_attention(Q, K, V)) @ params.w_o


def _channel_forward(ids, table, pe, params):
    E = table[ids] + pe
    Q, K, V = _split_heads_forward(E, params)
    H, A = scaled_dot_attention(Q, K, V, return_weights=True)
    concat = _merge_heads(H)
    out = concat @ params.w_o
    cache = {"ids": ids, "E": E, "Q": Q, "K": K, "V": V, "A": A, "concat": concat}
    return out.mean(axis=-2), cache


def _channel_backward(d_pooled, cache, params, grads, table_grad):
    E, Q, K, V, A, concat = (cache[k] for k in ("E", "Q", "K", "V", "A", "concat"))
    B, n, d = E.shape
    h, _, dk = params.w_q.shape
    d_out = np.broadcast_to(d_pooled[:, None, :] / n, (B, n, d))
    grads.w_o += concat.reshape(-1, d).T @ d_out.reshape(-1, d)
    d_concat = d_out @ params.w_o.T
    dH = np.swapaxes(d_concat.reshape(B, n, h, dk), 1, 2)
    dA = dH @ np.swapaxes(V, -1, -2)
    dV = np.swapaxes(A, -1, -2) @ dH
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / math.sqrt(dk)
    dQ = dS @ K
    dK = np.swapaxes(dS, -1, -2) @ Q
    grads.w_q += np.einsum("bnd,bhnk->hdk", E, dQ)
    grads.w_k += np.einsum("bnd,bhnk->hdk", E, dK)
    grads.w_v += np.einsum("bnd,bhnk->hdk", E, dV)
    dE = (
        np.einsum("bhnk,hdk->bnd", dQ, params.w_q)
        + np.einsum("bhnk,hdk->bnd", dK, params.w_k)
        + np.einsum("bhnk,hdk->bnd", dV, params.w_v)
    )
    np.add.at(table_grad, cache["ids"].reshape(-1), dE.reshape(-1, d))


def _as_batch(ids, max_len):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.shape[1] != max_len:
        raise ShapeMismatch(f"expected ids of length {max_len}, got shape {ids.shape}")
    return ids


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else ``1 / (1 - rate)``."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def forward_batch(bpe_ids, uni_ids, params: ParameterSet, config: ModelConfig, training=False, rng=None, return_cache=False):
    """Class probabilities ``[B, n_classes]`` for a batch of id rows."""
    bpe_ids = _as_batch(bpe_ids, config.max_len)
    uni_ids = _as_batch(uni_ids, config.max_len)
    if bpe_ids.shape[0] != uni_ids.shape[0]:
        raise ShapeMismatch("channels have different batch sizes")
    for name, ids, vocab in (("bpe", bpe_ids, config.bpe_vocab_size), ("uni", uni_ids, config.uni_vocab_size)):
        if ids.size and (ids.min() < 0 or ids.max() >= vocab):
            raise ShapeMismatch(f"{name} ids outside [0, {vocab})")
    if config.use_positional_encoding:
        pe = positional_encoding(config.max_len, config.d_model, config.pe_base)
    else:
        pe = np.zeros((config.max_len, config.d_model))

    v_bpe, cache_bpe = _channel_forward(bpe_ids, params.embed_bpe, pe, params)
    v_uni, cache_uni = _channel_forward(uni_ids, params.embed_uni, pe, params)
    z = np.concatenate([v_bpe, v_uni], axis=-1)
    pre = z @ params.dense1_w + params.dense1_b
    hidden = np.maximum(pre, 0.0)
    mask = None
    if training and config.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training with dropout needs a seeded rng")
        mask = dropout_mask(hidden.shape, config.dropout_rate, rng)
        hidden = hidden * mask
    logits = hidden @ params.out_w + params.out_b
    probs = softmax(logits, axis=-1)
    if not return_cache:
        return probs
    cache = {
        "bpe": cache_bpe,
        "uni": cache_uni,
        "z": z,
        "pre": pre,
        "hidden": hidden,
        "mask": mask,
        "probs": probs,
    }
    return probs, cache


def backward_batch(bpe_ids, uni_ids, labels, params: ParameterSet, config: ModelConfig, training=True, rng=None):
    """Gradients of the batch-mean cross-entropy and the loss itself."""
    probs, cache = forward_batch(bpe_ids, uni_ids, params, config, training=training, rng=rng, return_cache=True)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B = probs.shape[0]
    if labels.shape[0] != B:
        raise ShapeMismatch(f"{labels.shape[0]} labels for a batch of {B}")
    loss = float(np.mean(-np.log(np.maximum(probs[np.arange(B), labels], PROB_FLOOR))))

    grads = params.zeros_like()
    d_logits = probs.copy()
    d_logits[np.arange(B), labels] -= 1.0
    d_logits /= B
    grads.out_w += cache["hidden"].T @ d_logits
    grads.out_b += d_logits.sum(axis=0)
    d_hidden = d_logits @ params.out_w.T
    if cache["mask"] is not None:
        d_hidden = d_hidden * cache["mask"]
    d_pre = d_hidden * (cache["pre"] > 0.0)
    grads.dense1_w += cache["z"].T @ d_pre
    grads.dense1_b += d_pre.sum(axis=0)
    d_z = d_pre @ params.dense1_w.T
    d = config.d_model
    _channel_backward(d_z[:, :d], cache["bpe"], params, grads, grads.embed_bpe)
    _channel_backward(d_z[:, d:], cache["uni"], params, grads, grads.embed_uni)
    return grads, loss


def forward(pair, params: ParameterSet, config: ModelConfig, training=False, rng=None) -> np.ndarray:
    """Class probabilities for one :class:`~subword_attention.seqprep.EncodedPair`."""
    return forward_batch(pair.bpe_ids, pair.uni_ids, params, config, training=training, rng=rng)[0]


def backward(pair, label, params: ParameterSet, config: ModelConfig, rng=None, training=True):
    if label is None:
        label = pair.label
    return backward_batch(pair.bpe_ids, pair.uni_ids, [label], params, config, training=training, rng=rng)


def pooled_channels(bpe_ids, uni_ids, params: ParameterSet, config: ModelConfig):
    """Mean-pooled attention outputs ``(v_bpe, v_uni)``; exposed for inspection."""
    _, cache = forward_batch(bpe_ids, uni_ids, params, config, return_cache=True)
    d = config.d_model
    return cache["z"][:, :d], cache["z"][:, d:]
