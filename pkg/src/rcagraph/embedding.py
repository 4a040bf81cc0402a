"""Event-type embeddings via skip-gram with negative sampling.

Sequences are reduced to their type sequences (entities stripped); two types
that occur in the same surrounding order of types end up with similar
vectors. The table doubles as node features for the graph matcher and as
pair features for the relation classifier.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InsufficientVocabulary
from .events import EventSequence

logger = logging.getLogger(__name__)


@dataclass
class SkipGramConfig:
    context_window: int = 5  # events each side
    negatives_per_positive: int = 5
    epochs: int = 8
    learning_rate: float = 0.05
    seed: int = 0
    dim: int = 32
    normalize: bool = True  # unit-norm rows after training

    def __post_init__(self):
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")


class EmbeddingTable:
    """Vocab-ordered dense vectors for event types; OOV maps to zeros."""

    def __init__(self, dim: int, vocab: list[str], matrix: np.ndarray,
                 loss_curve: list[float] | None = None):
        if matrix.shape != (len(vocab), dim):
            raise ValueError(f"matrix shape {matrix.shape} does not match "
                             f"vocab {len(vocab)} x dim {dim}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embedding matrix contains non-finite values")
        self.dim = dim
        self.vocab = list(vocab)
        self.matrix = matrix
        self.index = {t: i for i, t in enumerate(vocab)}
        self.loss_curve = list(loss_curve or [])
        self._warned_oov: set[str] = set()

    def vector(self, type_id: str) -> np.ndarray:
        i = self.index.get(type_id)
        if i is None:
            if type_id not in self._warned_oov:
                self._warned_oov.add(type_id)
                logger.warning("unknown event type %r mapped to zero vector", type_id)
            return np.zeros(self.dim)
        return self.matrix[i]

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "vocab": self.vocab,
            "vectors": [[float(x) for x in row] for row in self.matrix],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EmbeddingTable":
        return cls(dim=doc["dim"], vocab=list(doc["vocab"]),
                   matrix=np.array(doc["vectors"], dtype=np.float64))

    def checksum(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def embed_type(type_id: str, table: EmbeddingTable) -> np.ndarray:
    return table.vector(type_id)


def _corpus(histories: list[EventSequence]) -> tuple[list[str], list[np.ndarray]]:
    counts: Counter[str] = Counter()
    for seq in histories:
        counts.update(seq.type_sequence())
    vocab = sorted(counts, key=lambda t: (-counts[t], t))
    index = {t: i for i, t in enumerate(vocab)}
    encoded = [np.array([index[t] for t in seq.type_sequence()], dtype=np.int32)
               for seq in histories]
    return vocab, encoded


def _pairs(encoded: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers: list[int] = []
    contexts: list[int] = []
    for seq in encoded:
        n = len(seq)
        for i in range(n):
            lo = max(0, i - window)
            hi = min(n, i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(int(seq[i]))
                    contexts.append(int(seq[j]))
    return (np.array(centers, dtype=np.int32), np.array(contexts, dtype=np.int32))


def _draw_negatives(
    rng: np.random.Generator,
    cum: np.ndarray,
    contexts: np.ndarray,
    n_neg: int,
) -> np.ndarray:
    """Distinct negatives per pair, none equal to the positive context."""
    out = np.empty((len(contexts), n_neg), dtype=np.int32)
    for p in range(len(contexts)):
        pos = contexts[p]
        got = 0
        while got < n_neg:
            idx = int(np.searchsorted(cum, rng.random(), side="right"))
            if idx == pos or idx in out[p, :got]:
                continue
            out[p, got] = idx
            got += 1
    return out


def train_embeddings(
    histories: list[EventSequence], cfg: SkipGramConfig
) -> EmbeddingTable:
    """Skip-gram with negative sampling over type sequences.

    Deterministic per (corpus order, seed). Raises InsufficientVocabulary
    when fewer than two distinct types (or no co-occurring pairs) exist.
    """
    vocab, encoded = _corpus(histories)
    if len(vocab) < 2:
        raise InsufficientVocabulary(
            f"need >= 2 distinct event types, got {len(vocab)}")
    centers, contexts = _pairs(encoded, cfg.context_window)
    if len(centers) == 0:
        raise InsufficientVocabulary("no co-occurring event pairs in corpus")

    counts = np.bincount(
        np.concatenate(encoded), minlength=len(vocab)).astype(np.float64)
    noise = counts ** 0.75
    cum = np.cumsum(noise / noise.sum())
    cum[-1] = 1.0
    n_neg = min(cfg.negatives_per_positive, len(vocab) - 1)

    rng = np.random.default_rng(cfg.seed)
    vec_in = (rng.random((len(vocab), cfg.dim)) - 0.5) / cfg.dim
    vec_out = np.zeros((len(vocab), cfg.dim))

    loss_curve = []
    for epoch in range(cfg.epochs):
        frac = epoch / max(1, cfg.epochs - 1) if cfg.epochs > 1 else 0.0
        lr = cfg.learning_rate * (1.0 - 0.95 * frac)
        negatives = _draw_negatives(rng, cum, contexts, n_neg)
        loss = kernels.sgns_epoch(vec_in, vec_out, centers, contexts, negatives, lr)
        loss_curve.append(float(loss) / len(centers))
    if not np.all(np.isfinite(vec_in)):
        raise ArithmeticError("training diverged: non-finite embeddings")
    if cfg.normalize:
        norms = np.linalg.norm(vec_in, axis=1, keepdims=True)
        vec_in = vec_in / np.where(norms > 0, norms, 1.0)
    return EmbeddingTable(cfg.dim, vocab, vec_in, loss_curve=loss_curve)
