"""A small convolutional sentence classifier with exact gradients.

Architecture: embedding lookup, one valid convolution + ReLU per filter
width, max-over-time pooling restricted to windows that start inside the
real tokens, concatenation, inverted dropout (train mode only), a dense
layer, and a softmax over {negative, positive}. Everything runs in
float64 so gradient checks and optimizer oracles stay tight.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .corpus import EncodedInstance, PAD_INDEX
from .errors import NonFiniteGradient, ShapeError, VocabOverflow

NUM_CLASSES = 2


@dataclasses.dataclass
class ModelParams:
    """All trainable tensors; gradients are carried in the same container."""

    embeddings: np.ndarray                 # (|V|, d)
    conv_weights: tuple[np.ndarray, ...]   # per width w: (m, w, d)
    conv_biases: tuple[np.ndarray, ...]    # per width w: (m,)
    dense_weights: np.ndarray              # (m * n_widths, 2)
    dense_bias: np.ndarray                 # (2,)
    filter_widths: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.conv_weights) != len(self.filter_widths) or len(self.conv_biases) != len(self.filter_widths):
            raise ValueError("one conv weight/bias pair required per filter width")
        d = self.embeddings.shape[1]
        m = self.feature_maps
        for w, cw, cb in zip(self.filter_widths, self.conv_weights, self.conv_biases):
            if cw.shape != (m, w, d):
                raise ValueError(f"conv weight for width {w} has shape {cw.shape}, expected {(m, w, d)}")
            if cb.shape != (m,):
                raise ValueError(f"conv bias for width {w} has shape {cb.shape}, expected {(m,)}")
        if self.dense_weights.shape != (m * len(self.filter_widths), NUM_CLASSES):
            raise ValueError(f"dense weights have shape {self.dense_weights.shape}")
        if self.dense_bias.shape != (NUM_CLASSES,):
            raise ValueError(f"dense bias has shape {self.dense_bias.shape}")

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def feature_maps(self) -> int:
        return self.conv_weights[0].shape[0]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """Named tensors in the canonical serialization order."""
        out: list[tuple[str, np.ndarray]] = [("embeddings", self.embeddings)]
        for w, cw, cb in zip(self.filter_widths, self.conv_weights, self.conv_biases):
            out.append((f"conv_w{w}", cw))
            out.append((f"conv_b{w}", cb))
        out.append(("dense_w", self.dense_weights))
        out.append(("dense_b", self.dense_bias))
        return out

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            embeddings=np.zeros_like(self.embeddings),
            conv_weights=tuple(np.zeros_like(w) for w in self.conv_weights),
            conv_biases=tuple(np.zeros_like(b) for b in self.conv_biases),
            dense_weights=np.zeros_like(self.dense_weights),
            dense_bias=np.zeros_like(self.dense_bias),
            filter_widths=self.filter_widths,
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            embeddings=self.embeddings.copy(),
            conv_weights=tuple(w.copy() for w in self.conv_weights),
            conv_biases=tuple(b.copy() for b in self.conv_biases),
            dense_weights=self.dense_weights.copy(),
            dense_bias=self.dense_bias.copy(),
            filter_widths=self.filter_widths,
        )

    def num_parameters(self) -> int:
        return sum(arr.size for _, arr in self.tensors())


def init_params(
    vocab_size: int,
    embed_dim: int,
    filter_widths: tuple[int, ...],
    feature_maps: int,
    seed: int,
    embeddings: np.ndarray | None = None,
) -> ModelParams:
    """Seeded parameter initialization.

    Embeddings default to uniform(-0.25, 0.25) with a zero PAD row; a
    pre-built embedding matrix (from an EmbeddingTable) may be supplied
    instead. Conv and dense weights use Glorot-uniform limits, biases
    start at zero.
    """
    widths = tuple(sorted(filter_widths))
    if not widths or any(w < 1 for w in widths):
        raise ValueError(f"filter widths must be positive: {filter_widths}")
    if feature_maps < 1:
        raise ValueError(f"feature_maps must be positive, got {feature_maps}")
    rng = np.random.default_rng(seed)
    if embeddings is not None:
        emb = np.array(embeddings, dtype=np.float64)
        if emb.shape != (vocab_size, embed_dim):
            raise ValueError(f"embedding matrix shape {emb.shape} != {(vocab_size, embed_dim)}")
    else:
        emb = rng.uniform(-0.25, 0.25, (vocab_size, embed_dim))
        emb[PAD_INDEX] = 0.0
    conv_w = []
    conv_b = []
    for w in widths:
        limit = np.sqrt(6.0 / (w * embed_dim + feature_maps))
        conv_w.append(rng.uniform(-limit, limit, (feature_maps, w, embed_dim)))
        conv_b.append(np.zeros(feature_maps))
    n_features = feature_maps * len(widths)
    limit = np.sqrt(6.0 / (n_features + NUM_CLASSES))
    dense_w = rng.uniform(-limit, limit, (n_features, NUM_CLASSES))
    return ModelParams(
        embeddings=emb,
        conv_weights=tuple(conv_w),
        conv_biases=tuple(conv_b),
        dense_weights=dense_w,
        dense_bias=np.zeros(NUM_CLASSES),
        filter_widths=widths,
    )


def _stack_batch(batch: list[EncodedInstance] | tuple[EncodedInstance, ...], max_width: int):
    if not batch:
        raise ValueError("batch is empty")
    lengths = np.array([e.length for e in batch], dtype=np.int64)
    padded = [len(e.indices) for e in batch]
    if min(padded) < max_width:
        raise ValueError(f"padded length {min(padded)} is shorter than the widest filter ({max_width})")
    t_max = max(padded)
    idx = np.full((len(batch), t_max), PAD_INDEX, dtype=np.int64)
    for i, e in enumerate(batch):
        idx[i, : len(e.indices)] = e.indices
    return idx, lengths


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _run(params: ModelParams, batch, dropout: float, mode: str, seed: int):
    """Shared forward pass; returns the probabilities and a cache for backward."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if not (0.0 <= dropout < 1.0):
        raise ValueError(f"dropout must be in [0, 1), got {dropout}")
    widths = params.filter_widths
    idx, lengths = _stack_batch(batch, max(widths))
    if idx.max() >= params.vocab_size or idx.min() < 0:
        raise VocabOverflow(
            f"index {int(idx.max())} outside embedding table of size {params.vocab_size}"
        )
    emb = params.embeddings[idx]  # (B, T, d)
    n, t_max, d = emb.shape
    m = params.feature_maps

    pooled_parts = []
    per_width = []
    for cw, cb, w in zip(params.conv_weights, params.conv_biases, widths):
        p = t_max - w + 1
        windows = np.concatenate([emb[:, i : i + p, :] for i in range(w)], axis=2)  # (B, P, w*d)
        conv = windows @ cw.reshape(m, w * d).T + cb  # (B, P, m)
        act = np.maximum(conv, 0.0)
        n_valid = np.maximum(lengths, w) - w + 1  # windows starting inside the real tokens
        valid = np.arange(p)[None, :] < n_valid[:, None]  # (B, P)
        masked = np.where(valid[:, :, None], act, -np.inf)
        arg = masked.argmax(axis=1)  # (B, m), first maximum wins
        pooled = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :]
        pooled_parts.append(pooled)
        per_width.append((windows, conv, arg, p))

    hidden = np.concatenate(pooled_parts, axis=1)  # (B, m * n_widths)
    if mode == "train" and dropout > 0.0:
        rng = np.random.default_rng(seed)
        keep = (rng.random(hidden.shape) >= dropout).astype(np.float64)
        drop_mask = keep / (1.0 - dropout)
    else:
        drop_mask = None
    dropped = hidden * drop_mask if drop_mask is not None else hidden
    logits = dropped @ params.dense_weights + params.dense_bias
    probs = _softmax(logits)
    cache = (idx, emb, per_width, dropped, drop_mask, probs)
    return probs, cache


def forward(
    params: ModelParams,
    batch,
    dropout: float = 0.0,
    mode: str = "infer",
    seed: int = 0,
) -> np.ndarray:
    """Class probabilities, one row per instance, rows summing to 1.

    Infer mode ignores dropout and is deterministic; train mode applies
    an inverted dropout mask drawn from ``seed``.
    """
    probs, _ = _run(params, batch, dropout, mode, seed)
    return probs


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-probability of the gold class.

    Probabilities are clamped to at least 1e-12 before the log.

    Raises:
        ShapeError: prediction and label counts differ.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if probs.shape[0] != labels.shape[0]:
        raise ShapeError(f"{probs.shape[0]} predictions vs {labels.shape[0]} labels")
    gold = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.clip(gold, 1e-12, 1.0))))


def backward(
    params: ModelParams,
    batch,
    labels,
    dropout: float = 0.0,
    seed: int = 0,
    mode: str = "train",
) -> tuple[float, ModelParams]:
    """Loss and exact gradients for a batch.

    Uses the same dropout mask as a train-mode forward pass under the
    same seed. Only embedding rows referenced by the batch receive
    nonzero embedding gradients.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(batch) != labels.shape[0]:
        raise ShapeError(f"{len(batch)} instances vs {labels.shape[0]} labels")
    probs, cache = _run(params, batch, dropout, mode, seed)
    idx, emb, per_width, dropped, drop_mask, _ = cache
    n, t_max, d = emb.shape
    m = params.feature_maps
    loss = cross_entropy(probs, labels)

    grads = params.zeros_like()
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    dlogits = (probs - onehot) / n
    grads.dense_bias[:] = dlogits.sum(axis=0)
    grads.dense_weights[:] = dropped.T @ dlogits
    dhidden = dlogits @ params.dense_weights.T
    if drop_mask is not None:
        dhidden = dhidden * drop_mask

    demb = np.zeros_like(emb)
    for k, (cw, w) in enumerate(zip(params.conv_weights, params.filter_widths)):
        windows, conv, arg, p = per_width[k]
        dpooled = dhidden[:, k * m : (k + 1) * m]  # (B, m)
        conv_at = np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :]
        gate = (conv_at > 0.0).astype(np.float64)
        dconv = np.zeros_like(conv)
        np.put_along_axis(dconv, arg[:, None, :], (dpooled * gate)[:, None, :], axis=1)
        grads.conv_weights[k][:] = (dconv.reshape(-1, m).T @ windows.reshape(-1, w * d)).reshape(m, w, d)
        grads.conv_biases[k][:] = dconv.sum(axis=(0, 1))
        dwindows = dconv @ cw.reshape(m, w * d)  # (B, P, w*d)
        for i in range(w):
            demb[:, i : i + p, :] += dwindows[:, :, i * d : (i + 1) * d]
    np.add.at(grads.embeddings, idx.reshape(-1), demb.reshape(-1, d))
    return loss, grads


def grad_check(
    params: ModelParams,
    batch,
    labels,
    epsilon: float = 1e-4,
    num_samples: int = 200,
    seed: int = 0,
) -> float:
    """Max relative disagreement between backward and central differences.

    Samples ``num_samples`` random scalar parameters (all of them when
    the model is smaller), nudges each by +/- ``epsilon``, and compares
    the difference quotient of the loss with the analytic gradient. Runs
    with dropout off so the path is deterministic.
    """
    _, grads = backward(params, batch, labels, dropout=0.0, seed=seed)
    named = params.tensors()
    grad_named = dict(grads.tensors())
    sizes = np.array([arr.size for _, arr in named])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(num_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat in sorted(int(c) for c in chosen):
        tensor_i = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, arr = named[tensor_i]
        local = flat - offsets[tensor_i]
        view = arr.reshape(-1)
        orig = view[local]
        view[local] = orig + epsilon
        loss_plus = cross_entropy(forward(params, batch), labels)
        view[local] = orig - epsilon
        loss_minus = cross_entropy(forward(params, batch), labels)
        view[local] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grad_named[name].reshape(-1)[local]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def check_finite(grads: ModelParams) -> None:
    """Raise NonFiniteGradient naming the first offending tensor."""
    for name, arr in grads.tensors():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
