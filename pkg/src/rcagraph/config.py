"""One-document run configuration with flag overrides.

Every knob of every stage lives here so a single JSON file pins an entire
reproducible run; unknown keys are rejected to catch typos.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .embedding import SkipGramConfig
from .errors import InvalidParams
from .fekg import ClusterConfig
from .fpg import FpgConfig
from .ranking import DiagnosisConfig, RankingWeights
from .relations import SvmConfig
from .rgcn import TrainConfig


@dataclass
class RunConfig:
    # simulator
    n_services: int = 18
    edge_density: float = 0.15
    n_classes: int = 20
    n_failures: int = 160
    sim_seed: int = 0
    # co-occurrence stats
    window_seconds: float = 30.0
    # embeddings
    embedding_dim: int = 32
    context_window: int = 5
    negatives_per_positive: int = 5
    embedding_epochs: int = 8
    embedding_lr: float = 0.05
    # relation SVMs
    svm_lambda: float = 1e-3
    svm_epochs: int = 50
    # propagation graphs
    max_associated: int = 3
    correlation_threshold: float = 0.55
    window_cap: int = 100
    # knowledge graphs
    cluster_mu: float = 0.5
    fekg_pipeline: str = "cluster"  # or "union"
    min_support: float = 0.5
    # similarity model
    rgcn_hidden: int = 32
    rgcn_out: int = 32
    mlp_hidden: int = 32
    similarity_lr: float = 0.02
    similarity_epochs: int = 200
    similarity_tol: float = 0.02
    neg_ratio: int = 3
    # ranking
    w_t: float = 0.5
    w_d: float = 0.5
    top_n: int = 5
    top_k_classes: int = 3
    # evaluation
    split_train: float = 0.4
    split_validation: float = 0.2
    split_test: float = 0.4
    eval_seeds: tuple[int, ...] = tuple(range(10))
    # master seed for training stages
    seed: int = 0

    def __post_init__(self):
        if self.fekg_pipeline not in ("cluster", "union"):
            raise InvalidParams(f"unknown fekg_pipeline {self.fekg_pipeline!r}")
        if abs(self.split_train + self.split_validation + self.split_test - 1.0) > 1e-9:
            raise InvalidParams("split fractions must sum to 1")

    def skipgram(self, seed: int | None = None) -> SkipGramConfig:
        return SkipGramConfig(
            context_window=self.context_window,
            negatives_per_positive=self.negatives_per_positive,
            epochs=self.embedding_epochs,
            learning_rate=self.embedding_lr,
            seed=self.seed if seed is None else seed,
            dim=self.embedding_dim,
        )

    def svm(self, seed: int | None = None) -> SvmConfig:
        return SvmConfig(lam=self.svm_lambda, epochs=self.svm_epochs,
                         seed=self.seed if seed is None else seed)

    def fpg(self) -> FpgConfig:
        return FpgConfig(max_associated=self.max_associated,
                         correlation_threshold=self.correlation_threshold,
                         window_cap=self.window_cap)

    def cluster(self) -> ClusterConfig:
        return ClusterConfig(mu=self.cluster_mu)

    def similarity_train(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(lr=self.similarity_lr, epochs=self.similarity_epochs,
                           seed=self.seed if seed is None else seed,
                           neg_ratio=self.neg_ratio, tol=self.similarity_tol)

    def weights(self) -> RankingWeights:
        return RankingWeights(w_t=self.w_t, w_d=self.w_d, top_n=self.top_n)

    def diagnosis(self) -> DiagnosisConfig:
        return DiagnosisConfig(fpg=self.fpg(), weights=self.weights(),
                               top_k_classes=self.top_k_classes)

    def to_json_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["eval_seeds"] = list(self.eval_seeds)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidParams(f"unknown config keys: {sorted(unknown)}")
        if "eval_seeds" in doc:
            doc = dict(doc, eval_seeds=tuple(doc["eval_seeds"]))
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
