"""Tokenization, dataset files, vocabularies, and embedding tables.

Datasets arrive pre-tokenized, one example per line, so tokenization is
lowercasing plus a whitespace split; each token remembers the byte span
it occupied in the raw line.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, EmptyLine, FormatError, ParseError

PAD_INDEX = 0
UNK_INDEX = 1
NUM_RESERVED = 2

DATASET_FORMATS = ("label-tab-text", "text-tab-label")


@dataclasses.dataclass(frozen=True)
class Token:
    """A lowercased token and its (start, end) byte offsets in the source line."""

    text: str
    source_span: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError(f"token text must be non-empty and whitespace-free: {self.text!r}")
        if self.source_span[0] >= self.source_span[1]:
            raise ValueError(f"empty source span: {self.source_span}")


@dataclasses.dataclass(frozen=True)
class Instance:
    """A labeled token sequence; label 0 = negative, 1 = positive."""

    id: int
    tokens: tuple[Token, ...]
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not self.tokens:
            raise ValueError("instance has no tokens")

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)


@dataclasses.dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of instances with unique ids."""

    name: str
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError(f"dataset {self.name!r} has duplicate instance ids")

    @property
    def size(self) -> int:
        return len(self.instances)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def tokenize(raw_line: str) -> tuple[Token, ...]:
    """Lowercase and split ``raw_line`` on whitespace.

    Spans are byte offsets into the UTF-8 encoding of the raw line, so
    they survive round-trips through files.

    Raises:
        EmptyLine: if nothing remains after trimming whitespace.
    """
    tokens: list[Token] = []
    byte_pos = 0
    start = 0
    buf: list[str] = []
    for ch in raw_line:
        if ch.isspace():
            if buf:
                tokens.append(Token("".join(buf).lower(), (start, byte_pos)))
                buf = []
        else:
            if not buf:
                start = byte_pos
            buf.append(ch)
        byte_pos += len(ch.encode("utf-8"))
    if buf:
        tokens.append(Token("".join(buf).lower(), (start, byte_pos)))
    if not tokens:
        raise EmptyLine(f"no tokens in line: {raw_line!r}")
    return tuple(tokens)


def load_dataset(path: str | Path, fmt: str = "label-tab-text", name: str | None = None) -> Dataset:
    """Read a tab-separated dataset file.

    Each non-blank line must contain exactly one tab; ``fmt`` says which
    side carries the "0"/"1" label. Instance ids are 0-based positions
    among the non-blank lines, in file order.

    Raises:
        ParseError: malformed label, tab count, or empty text, with the
            1-based line number.
        EmptyDataset: the file holds no instances.
    """
    if fmt not in DATASET_FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {DATASET_FORMATS}")
    path = Path(path)
    instances: list[Instance] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if line.count("\t") != 1:
                raise ParseError(
                    f"expected exactly one tab separator, found {line.count(chr(9))}", line=lineno
                )
            left, right = line.split("\t")
            label_text, body = (left, right) if fmt == "label-tab-text" else (right, left)
            label_text = label_text.strip()
            if label_text not in ("0", "1"):
                raise ParseError(f"label must be 0 or 1, got {label_text!r}", line=lineno)
            try:
                tokens = tokenize(body)
            except EmptyLine:
                raise ParseError("line has an empty text field", line=lineno) from None
            instances.append(Instance(id=len(instances), tokens=tokens, label=int(label_text)))
    if not instances:
        raise EmptyDataset(f"no instances in {path}")
    return Dataset(name=name if name is not None else path.stem, instances=tuple(instances))


@dataclasses.dataclass(frozen=True)
class Vocab:
    """Token-to-index mapping; indices 0 and 1 are reserved for PAD and UNK.

    Reserved slots have no token text at all, so nothing tokenization can
    produce ever collides with them.
    """

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        index = {tok: i + NUM_RESERVED for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("vocab token list contains duplicates")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens) + NUM_RESERVED

    def __len__(self) -> int:
        return self.size

    def __contains__(self, text: str) -> bool:
        return text in self._index

    def lookup(self, text: str) -> int:
        """Index of ``text``, or UNK_INDEX when out of vocabulary."""
        return self._index.get(text, UNK_INDEX)


def _iter_instances(dataset: Dataset | Iterable) -> Iterable:
    return dataset.instances if isinstance(dataset, Dataset) else dataset


def build_vocab(dataset: Dataset | Iterable, min_freq: int = 1) -> Vocab:
    """Vocabulary of tokens with corpus frequency >= ``min_freq``.

    Index assignment is deterministic: frequency descending, then token
    text ascending. Accepts a Dataset or any iterable of objects with a
    ``tokens`` attribute.
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be positive, got {min_freq}")
    counts: Counter[str] = Counter()
    for inst in _iter_instances(dataset):
        counts.update(tok.text for tok in inst.tokens)
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocab(tokens=tuple(kept))


@dataclasses.dataclass(frozen=True)
class EncodedInstance:
    """Index sequence for one instance, right-padded with PAD_INDEX."""

    indices: np.ndarray
    length: int
    label: int


def encode(instance, vocab: Vocab, pad_to: int) -> EncodedInstance:
    """Map tokens to vocab indices, right-padding to at least ``pad_to``.

    Out-of-vocabulary tokens become UNK_INDEX. The caller is responsible
    for choosing ``pad_to`` at least as large as the widest convolution
    filter.
    """
    if pad_to < 1:
        raise ValueError(f"pad_to must be positive, got {pad_to}")
    n = len(instance.tokens)
    padded = max(pad_to, n)
    indices = np.full(padded, PAD_INDEX, dtype=np.int64)
    for i, tok in enumerate(instance.tokens):
        indices[i] = vocab.lookup(tok.text)
    return EncodedInstance(indices=indices, length=n, label=instance.label)


@dataclasses.dataclass(frozen=True)
class EmbeddingTable:
    """A |V| x dim matrix of word vectors; row 0 (PAD) is all zeros."""

    dim: int
    matrix: np.ndarray


def load_embeddings(path: str | Path, vocab: Vocab, seed: int = 42) -> EmbeddingTable:
    """Load a text-format embedding file restricted to ``vocab``.

    The file starts with a "count dim" header, followed by one
    whitespace-delimited "word v1 ... v_dim" line per word. Vocab words
    absent from the file (including UNK) get per-dimension samples from
    uniform(-0.25, 0.25) drawn from ``seed``; the PAD row stays zero.

    Raises:
        FormatError: bad header, wrong row arity, a non-finite value, or
            a row count that disagrees with the header.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("embedding file is empty", line=1)
    header = lines[0].split()
    if len(header) != 2:
        raise FormatError("header must be 'count dim'", line=1)
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError("header must be two integers", line=1) from None
    if count < 0 or dim < 1:
        raise FormatError("header values out of range", line=1)

    vectors: dict[str, np.ndarray] = {}
    rows = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise FormatError(f"expected 1 word + {dim} values, found {len(parts)} fields", line=lineno)
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError:
            raise FormatError("non-numeric embedding value", line=lineno) from None
        if not np.all(np.isfinite(vec)):
            raise FormatError("non-finite embedding value", line=lineno)
        rows += 1
        vectors.setdefault(parts[0], vec)
    if rows != count:
        raise FormatError(f"header promises {count} rows, file has {rows}", line=1)

    rng = np.random.default_rng(seed)
    matrix = np.zeros((vocab.size, dim), dtype=np.float64)
    matrix[UNK_INDEX] = rng.uniform(-0.25, 0.25, dim)
    for i, tok in enumerate(vocab.tokens):
        row = vectors.get(tok)
        matrix[i + NUM_RESERVED] = row if row is not None else rng.uniform(-0.25, 0.25, dim)
    return EmbeddingTable(dim=dim, matrix=matrix)
