"""Pairwise event relation classification.

Two linear SVMs over the same pair features: the first decides whether a
directed relation between two time-ordered events exists at all, the second
labels an existing relation causal or sequential. Both are trained with the
Pegasos stochastic subgradient method on regularized hinge loss.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .embedding import EmbeddingTable
from .errors import DegenerateData, DimensionMismatch, PreconditionViolated
from .events import Event
from .simulator import Topology
from .stats import HistoricalStats, pmi

FEATURE_SCHEMA = "pair-features-v1"


class RelationKind(enum.Enum):
    SEQUENTIAL = "sequential"
    CAUSAL = "causal"


@dataclass
class PairFeatures:
    src_type_vec: np.ndarray
    dst_type_vec: np.ndarray
    delta_t: float  # seconds, src earlier
    same_entity: int
    entity_distance: float
    cooccurrence: float

    def __post_init__(self):
        if self.delta_t < 0:
            raise ValueError("delta_t must be >= 0")
        vec = self.to_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("pair features contain non-finite components")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.src_type_vec,
            self.dst_type_vec,
            [self.delta_t, float(self.same_entity),
             self.entity_distance, self.cooccurrence],
        ])


@dataclass
class FeatureContext:
    """Everything featurize needs: stats, embeddings, optional topology."""

    stats: HistoricalStats
    table: EmbeddingTable
    topology: Topology | None = None
    distance_cap: int = 8
    _hops: dict[str, dict[str, int]] = field(default_factory=dict, repr=False)

    def entity_distance(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        if self.topology is None:
            return float(self.distance_cap)
        if a not in self._hops:
            self._hops[a] = self._bfs(a)
        return float(min(self._hops[a].get(b, self.distance_cap), self.distance_cap))

    def _bfs(self, start: str) -> dict[str, int]:
        if start not in self.topology.services:
            return {}
        adj: dict[str, set[str]] = {s: set() for s in self.topology.services}
        for x, z in self.topology.edges:
            adj[x].add(z)
            adj[z].add(x)
        dist = {start: 0}
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist


def featurize(a: Event, b: Event, ctx: FeatureContext) -> PairFeatures:
    """Features of the time-ordered pair (a earlier, b later)."""
    if a.timestamp > b.timestamp:
        raise PreconditionViolated(
            f"featurize requires a.timestamp <= b.timestamp "
            f"({a.event_id} at {a.timestamp} > {b.event_id} at {b.timestamp})")
    return PairFeatures(
        src_type_vec=np.asarray(ctx.table.vector(a.event_type), dtype=np.float64),
        dst_type_vec=np.asarray(ctx.table.vector(b.event_type), dtype=np.float64),
        delta_t=(b.timestamp - a.timestamp) / 1000.0,
        same_entity=int(a.entity == b.entity),
        entity_distance=ctx.entity_distance(a.entity, b.entity),
        cooccurrence=pmi(a.event_type, b.event_type, ctx.stats),
    )


@dataclass
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 50
    seed: int = 0


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    feature_dim: int
    loss_curve: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.weights) != self.feature_dim:
            raise ValueError("weights length does not match feature_dim")

    def margin(self, features: PairFeatures) -> float:
        vec = features.to_vector()
        if vec.shape[0] != self.feature_dim:
            raise DimensionMismatch(
                f"feature dim {vec.shape[0]} != model dim {self.feature_dim}")
        return float(self.weights @ vec + self.bias)

    def to_json_dict(self) -> dict:
        return {
            "schema": FEATURE_SCHEMA,
            "feature_dim": self.feature_dim,
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SvmModel":
        return cls(weights=np.array(doc["weights"], dtype=np.float64),
                   bias=float(doc["bias"]), feature_dim=int(doc["feature_dim"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SvmModel":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_svm(
    pairs: list[tuple[PairFeatures, int]], config: SvmConfig | None = None
) -> SvmModel:
    """Pegasos on hinge loss; deterministic for fixed data order and seed.

    Bias is learned as an extra always-1 feature. Raises DegenerateData
    unless both labels occur.
    """
    config = config or SvmConfig()
    if not pairs:
        raise DegenerateData("no training pairs")
    labels = {lab for _, lab in pairs}
    if labels != {1, -1}:
        raise DegenerateData(f"need both +1 and -1 labels, got {sorted(labels)}")
    X = np.ascontiguousarray(
        np.stack([np.append(f.to_vector(), 1.0) for f, _ in pairs]))
    y = np.array([float(lab) for _, lab in pairs])
    rng = np.random.default_rng(config.seed)
    order = rng.integers(0, len(pairs), size=config.epochs * len(pairs),
                         dtype=np.int32)
    w = np.zeros(X.shape[1])
    losses = np.zeros(config.epochs)
    kernels.pegasos_train(X, y, order, config.lam, config.epochs, w, losses)
    return SvmModel(weights=w[:-1], bias=float(w[-1]),
                    feature_dim=X.shape[1] - 1,
                    loss_curve=[float(v) for v in losses])


def relation_exists(model: SvmModel, features: PairFeatures) -> bool:
    """True iff the margin is strictly positive (ties are negative)."""
    return model.margin(features) > 0.0


def classify_kind(model: SvmModel, features: PairFeatures) -> RelationKind:
    return RelationKind.CAUSAL if model.margin(features) > 0.0 else RelationKind.SEQUENTIAL


@dataclass
class RelationModels:
    """Trained existence + kind classifiers with their feature context."""

    exists: SvmModel
    kind: SvmModel
    ctx: FeatureContext

    def features(self, a: Event, b: Event) -> PairFeatures:
        return featurize(a, b, self.ctx)

    def exists_between(self, a: Event, b: Event) -> bool:
        return relation_exists(self.exists, self.features(a, b))

    def kind_between(self, a: Event, b: Event) -> RelationKind:
        return classify_kind(self.kind, self.features(a, b))
