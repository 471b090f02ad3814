"""End-to-end training: per-batch rule application, loss minimization,
early stopping, checkpointing, and prediction.

Each iteration transforms the mini-batch through the compiled rule
chain, encodes it, and takes one AdaDelta step on the cross-entropy of
the transformed batch. The vocabulary is built over the transformed
training data, since that is all the network ever sees.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .corpus import Dataset, Vocab, build_vocab, encode, load_embeddings
from .errors import CorruptCheckpoint, IncompatibleCheckpoint, NonFiniteLoss
from .network import ModelParams, backward, forward, init_params
from .optim import AdaDeltaState, adadelta_step
from .rules import EMPTY_RULESET, ExtractorChain, RuleSet, compile_ruleset, parse_rules

CHECKPOINT_MAGIC = b"NLRF"
CHECKPOINT_VERSION = 1
_EVAL_CHUNK = 256


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and seeding for one training run.

    Defaults are desk-scale; the full-scale configuration of the cited
    convolutional baseline is filter_widths=(3, 4, 5), feature_maps=100,
    embed_dim=300 with pretrained vectors.
    """

    epochs: int = 25
    batch_size: int = 50
    embed_dim: int = 50
    filter_widths: tuple[int, ...] = (2, 3, 4)
    feature_maps: int = 16
    dropout: float = 0.5
    seed: int = 42
    patience: int = 5
    apply_rules_at_inference: bool = True
    embeddings_path: str | None = None
    min_freq: int = 1
    dev_fraction: float = 0.1
    pad_to: int | None = None
    rho: float = 0.95
    eps: float = 1e-6
    max_col_norm: float | None = 3.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not (0.0 <= self.dev_fraction < 1.0):
            raise ValueError(f"dev_fraction must be in [0, 1), got {self.dev_fraction}")
        if not self.filter_widths:
            raise ValueError("at least one filter width is required")

    @property
    def effective_pad(self) -> int:
        return self.pad_to if self.pad_to is not None else max(self.filter_widths)


@dataclasses.dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_accuracy: float | None


@dataclasses.dataclass
class TrainedModel:
    """Parameters plus everything needed to reproduce their predictions."""

    params: ModelParams
    vocab: Vocab
    ruleset: RuleSet
    config: TrainConfig
    log: tuple[EpochStats, ...]
    best_epoch: int | None

    @property
    def best_dev_accuracy(self) -> float | None:
        if self.best_epoch is None:
            return None
        return self.log[self.best_epoch].dev_accuracy


def _predict_probs(
    params: ModelParams,
    vocab: Vocab,
    chain: ExtractorChain | None,
    instances,
    pad_to: int,
) -> np.ndarray:
    """Deterministic inference over arbitrary instance sequences."""
    items = list(instances.instances if isinstance(instances, Dataset) else instances)
    if chain is not None:
        items = list(chain.apply_batch(items))
    probs = []
    for start in range(0, len(items), _EVAL_CHUNK):
        chunk = items[start : start + _EVAL_CHUNK]
        encoded = [encode(inst, vocab, pad_to) for inst in chunk]
        probs.append(forward(params, encoded, mode="infer"))
    return np.concatenate(probs, axis=0)


def _labels_from_probs(probs: np.ndarray) -> np.ndarray:
    # exact ties go to class 0
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)


def train(
    config: TrainConfig,
    train_set: Dataset,
    dev_set: Dataset | None = None,
    ruleset: RuleSet = EMPTY_RULESET,
) -> TrainedModel:
    """Train the classifier on rule-transformed data.

    ``dev_set=None`` carves a seeded ``config.dev_fraction`` of the
    training data for early stopping; pass a Dataset with no instances
    to disable early stopping entirely. Returns the parameters from the
    epoch with the best dev accuracy (earliest epoch on ties).

    All randomness (splits, initialization, shuffles, dropout) flows
    from ``config.seed``, so identical inputs give identical models.

    Raises:
        NonFiniteLoss: a batch produced NaN or infinite loss.
    """
    if train_set.size == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    embed_seed = int(rng.integers(2**31))
    init_seed = int(rng.integers(2**31))
    split_seed = int(rng.integers(2**31))

    train_items: list = list(train_set.instances)
    if dev_set is None and config.dev_fraction > 0.0 and len(train_items) >= 2:
        n_dev = max(1, int(len(train_items) * config.dev_fraction))
        perm = np.random.default_rng(split_seed).permutation(len(train_items))
        dev_items = [train_items[i] for i in perm[:n_dev]]
        train_items = [train_items[i] for i in perm[n_dev:]]
    elif dev_set is not None and dev_set.size > 0:
        dev_items = list(dev_set.instances)
    else:
        dev_items = []

    chain = compile_ruleset(ruleset)
    transformed_train = chain.apply_batch(train_items)
    vocab = build_vocab(transformed_train, config.min_freq)

    embed_matrix = None
    run_config = config
    if config.embeddings_path is not None:
        table = load_embeddings(config.embeddings_path, vocab, seed=embed_seed)
        embed_matrix = table.matrix
        if table.dim != config.embed_dim:
            run_config = dataclasses.replace(config, embed_dim=table.dim)
    params = init_params(
        vocab_size=vocab.size,
        embed_dim=run_config.embed_dim,
        filter_widths=run_config.filter_widths,
        feature_maps=run_config.feature_maps,
        seed=init_seed,
        embeddings=embed_matrix,
    )
    run_config = dataclasses.replace(run_config, filter_widths=params.filter_widths)
    pad_to = run_config.effective_pad
    eval_chain = chain if run_config.apply_rules_at_inference else None
    state = AdaDeltaState(rho=run_config.rho, eps=run_config.eps)

    log: list[EpochStats] = []
    best_epoch: int | None = None
    best_accuracy = -1.0
    best_params: ModelParams | None = None
    stale = 0
    n = len(train_items)
    for epoch in range(run_config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for step, start in enumerate(range(0, n, run_config.batch_size)):
            batch = [train_items[i] for i in order[start : start + run_config.batch_size]]
            star = chain.apply_batch(batch)
            encoded = [encode(inst, vocab, pad_to) for inst in star]
            labels = [inst.label for inst in star]
            step_seed = int(rng.integers(2**63))
            loss, grads = backward(
                params, encoded, labels, dropout=run_config.dropout, seed=step_seed
            )
            if not np.isfinite(loss):
                ids = tuple(inst.id for inst in batch)
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, step {step}; instance ids {ids}",
                    epoch=epoch,
                    step=step,
                    instance_ids=ids,
                )
            adadelta_step(state, params, grads, max_col_norm=run_config.max_col_norm)
            loss_sum += loss * len(batch)
        train_loss = loss_sum / n

        dev_accuracy: float | None = None
        if dev_items:
            probs = _predict_probs(params, vocab, eval_chain, dev_items, pad_to)
            preds = _labels_from_probs(probs)
            gold = np.array([inst.label for inst in dev_items])
            dev_accuracy = float(np.mean(preds == gold))
            if dev_accuracy > best_accuracy:
                best_accuracy = dev_accuracy
                best_epoch = epoch
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
        log.append(EpochStats(epoch=epoch, train_loss=train_loss, dev_accuracy=dev_accuracy))
        if dev_items and stale >= max(run_config.patience, 1):
            break

    final = best_params if best_params is not None else params
    return TrainedModel(
        params=final,
        vocab=vocab,
        ruleset=ruleset,
        config=run_config,
        log=tuple(log),
        best_epoch=best_epoch,
    )


def predict(model: TrainedModel, instances) -> tuple[np.ndarray, np.ndarray]:
    """Labels and class probabilities for a sequence of instances.

    When the model was configured with ``apply_rules_at_inference``, the
    instances pass through its rule chain first. An exact 0.5/0.5 tie
    predicts class 0.
    """
    chain = compile_ruleset(model.ruleset) if model.config.apply_rules_at_inference else None
    probs = _predict_probs(
        model.params, model.vocab, chain, instances, model.config.effective_pad
    )
    return _labels_from_probs(probs), probs


# -- checkpoint serialization ----------------------------------------------

def _config_to_json(config: TrainConfig) -> dict:
    raw = dataclasses.asdict(config)
    raw["filter_widths"] = list(config.filter_widths)
    return raw


def _config_from_json(raw: dict) -> TrainConfig:
    raw = dict(raw)
    raw["filter_widths"] = tuple(raw["filter_widths"])
    return TrainConfig(**raw)


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Serialize a model so a later load predicts bit-identically.

    Layout: magic, version byte, manifest length, JSON manifest, then
    one little-endian float64 block per tensor in manifest order, and a
    trailing CRC32 of everything before it.
    """
    manifest = {
        "config": _config_to_json(model.config),
        "vocab": list(model.vocab.tokens),
        "rules": model.ruleset.to_source(),
        "shapes": [[name, list(arr.shape)] for name, arr in model.params.tensors()],
        "log": [[s.epoch, s.train_loss, s.dev_accuracy] for s in model.log],
        "best_epoch": model.best_epoch,
    }
    manifest_bytes = json.dumps(
        manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob.append(CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(manifest_bytes))
    blob += manifest_bytes
    for _, arr in model.params.tensors():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(blob))
    os.replace(tmp, path)


def load_model(path: str | Path) -> TrainedModel:
    """Read a checkpoint written by :func:`save_model`.

    Raises:
        IncompatibleCheckpoint: wrong magic or unknown format version.
        CorruptCheckpoint: truncated data or CRC mismatch.
    """
    data = Path(path).read_bytes()
    if len(data) < len(CHECKPOINT_MAGIC) + 1:
        raise CorruptCheckpoint(f"{path}: file too short to be a checkpoint")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise IncompatibleCheckpoint(f"{path}: bad magic {data[:4]!r}")
    version = data[len(CHECKPOINT_MAGIC)]
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpoint(f"{path}: unsupported checkpoint version {version}")
    header_end = len(CHECKPOINT_MAGIC) + 1 + 4
    if len(data) < header_end + 4:
        raise CorruptCheckpoint(f"{path}: truncated header")
    (manifest_len,) = struct.unpack("<I", data[len(CHECKPOINT_MAGIC) + 1 : header_end])
    body_end = header_end + manifest_len
    if len(data) < body_end + 4:
        raise CorruptCheckpoint(f"{path}: truncated manifest")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch")
    try:
        manifest = json.loads(data[header_end:body_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable manifest: {exc}") from None

    config = _config_from_json(manifest["config"])
    vocab = Vocab(tokens=tuple(manifest["vocab"]))
    ruleset = parse_rules(manifest["rules"])
    offset = body_end
    arrays: dict[str, np.ndarray] = {}
    for name, shape in manifest["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data) - 4:
            raise CorruptCheckpoint(f"{path}: truncated parameter block {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data) - 4:
        raise CorruptCheckpoint(f"{path}: {len(data) - 4 - offset} unexpected trailing bytes")

    widths = config.filter_widths
    try:
        params = ModelParams(
            embeddings=arrays["embeddings"],
            conv_weights=tuple(arrays[f"conv_w{w}"] for w in widths),
            conv_biases=tuple(arrays[f"conv_b{w}"] for w in widths),
            dense_weights=arrays["dense_w"],
            dense_bias=arrays["dense_b"],
            filter_widths=widths,
        )
    except KeyError as exc:
        raise CorruptCheckpoint(f"{path}: missing parameter block {exc}") from None
    log = tuple(
        EpochStats(epoch=int(e), train_loss=float(tl), dev_accuracy=None if da is None else float(da))
        for e, tl, da in manifest["log"]
    )
    return TrainedModel(
        params=params,
        vocab=vocab,
        ruleset=ruleset,
        config=config,
        log=log,
        best_epoch=manifest["best_epoch"],
    )
