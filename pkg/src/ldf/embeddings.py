"""Pretrained word vectors, tokenization, and label embeddings."""

import logging
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParseError

log = logging.getLogger(__name__)

_PUNCT = string.punctuation


@dataclass
class EmbeddingTable:
    """Token -> vector map backed by a (V, dim) float64 matrix."""

    dim: int
    vocab: dict
    matrix: np.ndarray
    frozen: bool = True
    duplicates: int = 0

    def __post_init__(self):
        if self.dim <= 0:
            raise FormatError(f"embedding dim must be positive, got {self.dim}")
        if self.matrix.shape != (len(self.vocab), self.dim):
            raise FormatError(
                f"matrix shape {self.matrix.shape} does not match vocab size "
                f"{len(self.vocab)} x dim {self.dim}"
            )

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def lookup(self, token):
        """Row for ``token`` or ``None`` when out of vocabulary."""
        i = self.vocab.get(token)
        return None if i is None else self.matrix[i]

    def ids(self, tokens):
        """Row indices, -1 for OOV tokens."""
        return np.array([self.vocab.get(t, -1) for t in tokens], dtype=np.intp)

    @classmethod
    def from_dict(cls, vectors, dim=None):
        tokens = list(vectors)
        if dim is None:
            dim = len(next(iter(vectors.values()))) if vectors else 50
        matrix = np.array([vectors[t] for t in tokens], dtype=np.float64).reshape(len(tokens), dim)
        return cls(dim=dim, vocab={t: i for i, t in enumerate(tokens)}, matrix=matrix)


def load_vectors(path, dim=None):
    """Read a GloVe-style text file: ``token f1 f2 ... f_dim`` per line.

    The first line fixes ``dim`` unless given. When a token repeats, the first
    occurrence is kept and the repeat is counted in ``duplicates``.
    """
    vocab = {}
    rows = []
    duplicates = 0
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError("expected a token followed by floats", lineno, path)
            token, raw = parts[0], parts[1:]
            try:
                values = [float(v) for v in raw]
            except ValueError as exc:
                raise ParseError(f"bad float in vector for {token!r}: {exc}", lineno, path) from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise FormatError(
                    f"vector for {token!r} has {len(values)} values, expected {dim}", lineno, path
                )
            if token in vocab:
                duplicates += 1
                continue
            vocab[token] = len(rows)
            rows.append(values)
    if duplicates:
        log.warning("%s: %d duplicate tokens ignored (first occurrence kept)", path, duplicates)
    dim = 50 if dim is None else dim
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(dim=dim, vocab=vocab, matrix=matrix, duplicates=duplicates)


def save_vectors(table, path):
    """Write ``table`` in the text format read by :func:`load_vectors` (floats round-trip exactly)."""
    inv = sorted(table.vocab.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        for token, i in inv:
            fh.write(token + " " + " ".join(repr(float(v)) for v in table.matrix[i]) + "\n")


def tokenize(text):
    """Lowercase, split on whitespace, strip surrounding ASCII punctuation."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def label_tokens(class_name):
    """``food_food_meat_burger`` -> ``['food', 'food', 'meat', 'burger']``."""
    if not class_name or not class_name.strip("_"):
        raise ValueError("class name must be non-empty")
    return [t for t in class_name.lower().split("_") if t]


@dataclass
class LabelEmbedding:
    class_name: str
    vector: np.ndarray
    covered_tokens: list = field(default_factory=list)


def build_label_embedding(class_name, table):
    """Mean of the in-vocabulary label-token vectors; zero vector if none are known."""
    tokens = label_tokens(class_name)
    covered = [t for t in tokens if t in table.vocab]
    if not covered:
        log.warning("label %r: no token in vocabulary, using zero vector", class_name)
        return LabelEmbedding(class_name, np.zeros(table.dim), [])
    vec = table.matrix[[table.vocab[t] for t in covered]].mean(axis=0)
    return LabelEmbedding(class_name, vec, covered)
