"""Training orchestration: from labeled histories to a deployable artifact set.

fit_artifacts runs the offline side end to end: co-occurrence stats,
type embeddings, the two relation SVMs (labels straight from simulator
ground truth), per-class knowledge graphs, and the similarity model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .embedding import EmbeddingTable, train_embeddings
from .errors import DegenerateData, InvalidParams
from .events import EventSequence, load_events
from .fekg import (ClusterConfig, Fekg, RelationKind, RootInfo,
                   build_fekg_cluster, build_fekg_union)
from .fpg import Fpg, build_fpg
from .ranking import DiagnosisModels
from .relations import (FeatureContext, PairFeatures, RelationModels, SvmModel,
                        featurize, train_svm)
from .rgcn import (MultiGraph, RgcnSimilarityModel, init_similarity_model,
                   to_multigraph, train_similarity)
from .simulator import GeneratedCase, Topology, load_ground_truth, load_topology
from .stats import build_stats

logger = logging.getLogger(__name__)


@dataclass
class LabeledDataset:
    """Histories plus per-failure ground truth (class, root, parentage)."""

    sequences: list[EventSequence]
    truth: dict[str, dict]
    topology: Topology | None = None

    def __post_init__(self):
        missing = [s.failure_id for s in self.sequences if s.failure_id not in self.truth]
        if missing:
            raise InvalidParams(f"ground truth missing for failures {missing[:3]}")

    @classmethod
    def from_cases(cls, cases: list[GeneratedCase],
                   topology: Topology | None = None) -> "LabeledDataset":
        truth = {
            c.sequence.failure_id: {
                "fault_class": c.sequence.fault_class,
                "root_event_id": c.root_event_id,
                "alarm_event_id": c.sequence.alarm_event_id,
                "propagation_path": list(c.propagation_path),
                "parents": dict(c.parents),
            }
            for c in cases
        }
        return cls(sequences=[c.sequence for c in cases], truth=truth,
                   topology=topology)

    @classmethod
    def from_dir(cls, data_dir: str | Path) -> "LabeledDataset":
        data_dir = Path(data_dir)
        topo = None
        if (data_dir / "topology.json").exists():
            topo = load_topology(data_dir / "topology.json")
        return cls(
            sequences=load_events(data_dir / "events.jsonl"),
            truth=load_ground_truth(data_dir / "ground_truth.json"),
            topology=topo,
        )


def _ancestors(parents: dict[str, str]) -> dict[str, set[str]]:
    anc: dict[str, set[str]] = {}

    def walk(eid: str) -> set[str]:
        if eid in anc:
            return anc[eid]
        p = parents.get(eid)
        anc[eid] = set() if p is None else {p} | walk(p)
        return anc[eid]

    for eid in parents:
        walk(eid)
    return anc


def make_relation_training_pairs(
    dataset: LabeledDataset,
    sequences: list[EventSequence],
    ctx: FeatureContext,
) -> tuple[list[tuple[PairFeatures, int]], list[tuple[PairFeatures, int]]]:
    """Label pairs from propagation parentage.

    Existence: propagation-related pairs (parent or ancestor) are positive;
    pairs touching a noise event are negative. Kind: direct parents are
    causal (+1), ancestor-but-not-parent pairs sequential (-1).
    """
    exist_pairs: list[tuple[PairFeatures, int]] = []
    kind_pairs: list[tuple[PairFeatures, int]] = []
    for seq in sequences:
        info = dataset.truth[seq.failure_id]
        parents: dict[str, str] = info.get("parents", {})
        by_id = {e.event_id: e for e in seq.events}
        propagated = set(parents) | {info["root_event_id"]}
        noise = [e for e in seq.events if e.event_id not in propagated]
        anc = _ancestors(parents)
        for child, chain in anc.items():
            for up in chain:
                a, b = by_id[up], by_id[child]
                f = featurize(a, b, ctx)
                exist_pairs.append((f, 1))
                kind_pairs.append((f, 1 if parents.get(child) == up else -1))
        related = [by_id[eid] for eid in sorted(propagated)]
        for n in noise:
            for r in related:
                a, b = (n, r) if n.sort_key() <= r.sort_key() else (r, n)
                exist_pairs.append((featurize(a, b, ctx), -1))
        for i in range(len(noise)):
            for j in range(i + 1, len(noise)):
                a, b = sorted((noise[i], noise[j]), key=lambda e: e.sort_key())
                exist_pairs.append((featurize(a, b, ctx), -1))
    return exist_pairs, kind_pairs


def _supported_path(path: list[str], fekg_subgraphs) -> list[str]:
    """Longest prefix of the ground-truth path whose edges some subgraph holds."""
    if len(path) < 2:
        return list(path)
    kept = [path[0]]
    for a, b in zip(path, path[1:]):
        ok = any((a, k, b) in sg.edges for sg in fekg_subgraphs for k in RelationKind)
        if not ok:
            break
        kept.append(b)
    return kept


@dataclass
class Artifacts:
    table: EmbeddingTable
    rel_models: RelationModels
    fekgs: dict[str, Fekg]
    sim_model: RgcnSimilarityModel | None
    train_fpgs: dict[str, Fpg] = field(default_factory=dict)
    config: RunConfig | None = None

    def diagnosis_models(self) -> DiagnosisModels:
        if self.sim_model is None:
            raise InvalidParams("artifacts carry no similarity model")
        return DiagnosisModels(relations=self.rel_models,
                               similarity=self.sim_model, table=self.table)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        (out / "fekg").mkdir(parents=True, exist_ok=True)
        self.table.save(out / "embeddings.json")
        self.rel_models.exists.save(out / "svm_exists.json")
        self.rel_models.kind.save(out / "svm_kind.json")
        if self.sim_model is None:
            raise InvalidParams("cannot save artifacts without a similarity model")
        self.sim_model.save(out / "similarity_model.json")
        stats = self.rel_models.ctx.stats
        (out / "stats.json").write_text(json.dumps({
            "window_seconds": stats.window_seconds,
            "type_counts": dict(sorted(stats.type_counts.items())),
            "type_pair_counts": [[a, b, n] for (a, b), n in
                                 sorted(stats.type_pair_counts.items())],
        }, sort_keys=True) + "\n", encoding="utf-8")
        for fault_class, fekg in sorted(self.fekgs.items()):
            fekg.save(out / "fekg" / f"{fault_class}.json")
        manifest = {
            "embedding_checksum": self.table.checksum(),
            "fekg_classes": sorted(self.fekgs),
            "n_train_fpgs": len(self.train_fpgs),
            "config": self.config.to_json_dict() if self.config else None,
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, out_dir: str | Path,
             topology: Topology | None = None) -> "Artifacts":
        out = Path(out_dir)
        table = EmbeddingTable.load(out / "embeddings.json")
        stats_doc = json.loads((out / "stats.json").read_text(encoding="utf-8"))
        from .stats import HistoricalStats

        stats = HistoricalStats(
            type_pair_counts={(a, b): n for a, b, n in stats_doc["type_pair_counts"]},
            type_counts=dict(stats_doc["type_counts"]),
            window_seconds=stats_doc["window_seconds"],
        )
        ctx = FeatureContext(stats=stats, table=table, topology=topology)
        rel_models = RelationModels(
            exists=SvmModel.load(out / "svm_exists.json"),
            kind=SvmModel.load(out / "svm_kind.json"),
            ctx=ctx,
        )
        fekgs = {}
        for path in sorted((out / "fekg").glob("*.json")):
            fekg = Fekg.load(path)
            fekgs[fekg.fault_class] = fekg
        sim_model = RgcnSimilarityModel.load(out / "similarity_model.json", table=table)
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        config = (RunConfig.from_json_dict(manifest["config"])
                  if manifest.get("config") else None)
        return cls(table=table, rel_models=rel_models, fekgs=fekgs,
                   sim_model=sim_model, config=config)


def group_by_class(sequences: list[EventSequence]) -> dict[str, list[EventSequence]]:
    groups: dict[str, list[EventSequence]] = {}
    for seq in sequences:
        groups.setdefault(seq.fault_class or "unknown", []).append(seq)
    return {c: sorted(g, key=lambda s: s.failure_id) for c, g in sorted(groups.items())}


def make_similarity_pairs(
    fpg_graphs: list[tuple[str, MultiGraph]],
    kb_graphs: dict[str, list[MultiGraph]],
    neg_ratio: int,
    seed: int,
    max_pos: int = 3,
) -> list[tuple[MultiGraph, MultiGraph, int]]:
    """Positives pair each graph with up to max_pos of its own class's
    entries; negatives sample other classes at neg_ratio per positive."""
    rng = np.random.default_rng(seed)
    classes = sorted(kb_graphs)
    pairs = []
    for fault_class, mg in fpg_graphs:
        own = [kg for kg in kb_graphs.get(fault_class, []) if kg is not mg]
        if len(own) > max_pos:
            picked = rng.choice(len(own), size=max_pos, replace=False)
            own = [own[int(i)] for i in sorted(picked)]
        for kg in own:
            pairs.append((mg, kg, 1))
        others = [c for c in classes if c != fault_class]
        if not others or not own:
            continue
        n_neg = min(len(own) * neg_ratio, len(others))
        for c in rng.choice(len(others), size=n_neg, replace=False):
            other_class = others[int(c)]
            kgs = kb_graphs[other_class]
            pairs.append((mg, kgs[int(rng.integers(0, len(kgs)))], 0))
    return pairs


def fit_base_artifacts(
    dataset: LabeledDataset,
    train: list[EventSequence],
    config: RunConfig,
    seed: int | None = None,
) -> Artifacts:
    """Everything except the similarity model: stats, embeddings, relation
    classifiers, per-failure propagation graphs, per-class knowledge graphs."""
    seed = config.seed if seed is None else seed
    stats = build_stats(train, config.window_seconds)
    table = train_embeddings(train, config.skipgram(seed=seed))
    ctx = FeatureContext(stats=stats, table=table, topology=dataset.topology)
    exist_pairs, kind_pairs = make_relation_training_pairs(dataset, train, ctx)
    rel_models = RelationModels(
        exists=train_svm(exist_pairs, config.svm(seed=seed)),
        kind=train_svm(kind_pairs, config.svm(seed=seed + 1)),
        ctx=ctx,
    )

    fpg_cfg = config.fpg()
    train_fpgs = {
        seq.failure_id: build_fpg(seq, fpg_cfg, stats, rel_models,
                                  apply_window_cap=False)
        for seq in train
    }

    fekgs: dict[str, Fekg] = {}
    for fault_class, instances in group_by_class(train).items():
        info = dataset.truth[instances[0].failure_id]
        root_event = info["root_event_id"]
        root_type = next(e.event_type for e in instances[0].events
                         if e.event_id == root_event)
        path = list(info.get("propagation_path") or [root_type])
        graphs = [train_fpgs[s.failure_id] for s in instances]
        if config.fekg_pipeline == "union":
            probe = build_fekg_union(instances, rel_models,
                                     RootInfo(root_type, (root_type,)),
                                     min_support=config.min_support)
            supported = _supported_path(path, probe.subgraphs)
            fekgs[fault_class] = build_fekg_union(
                instances, rel_models, RootInfo(root_type, tuple(supported)),
                min_support=config.min_support)
        else:
            clustered = build_fekg_cluster(graphs, ClusterConfig(mu=config.cluster_mu),
                                           fault_class, RootInfo(root_type, (root_type,)))
            supported = _supported_path(path, clustered.subgraphs)
            if len(supported) < len(path):
                logger.warning("class %s: propagation path trimmed to %d/%d steps",
                               fault_class, len(supported), len(path))
            fekgs[fault_class] = Fekg(
                fault_class=fault_class,
                subgraphs=clustered.subgraphs,
                root_cause_type=root_type,
                propagation_path=supported,
                provenance=clustered.provenance,
            )

    return Artifacts(table=table, rel_models=rel_models, fekgs=fekgs,
                     sim_model=None, train_fpgs=train_fpgs, config=config)


def train_similarity_model(
    artifacts: Artifacts,
    train: list[EventSequence],
    config: RunConfig,
    seed: int,
    similarity_mode: str = "fekg",
) -> RgcnSimilarityModel:
    """Fit the graph matcher on top of base artifacts.

    similarity_mode picks the training pairs: "fekg" pairs propagation
    graphs with knowledge-graph subgraphs (the full system), "fpg" pairs
    propagation graphs with each other (knowledge graphs bypassed).
    """
    if similarity_mode not in ("fekg", "fpg"):
        raise InvalidParams(f"unknown similarity_mode {similarity_mode!r}")
    table = artifacts.table
    fpg_graphs = [
        (seq.fault_class or "unknown",
         to_multigraph(artifacts.train_fpgs[seq.failure_id], table,
                       config.window_cap))
        for seq in train
    ]
    if similarity_mode == "fekg":
        kb_graphs = {
            c: [to_multigraph(sg, table, config.window_cap)
                for sg in fekg.subgraphs if not sg.is_empty()] or
               [to_multigraph(fekg.subgraphs[0], table, config.window_cap)]
            for c, fekg in artifacts.fekgs.items()
        }
    else:
        kb_graphs = {}
        for fault_class, mg in fpg_graphs:
            kb_graphs.setdefault(fault_class, []).append(mg)

    pairs = make_similarity_pairs(fpg_graphs, kb_graphs, config.neg_ratio, seed)
    if not pairs or {label for _, _, label in pairs} != {0, 1}:
        raise DegenerateData("similarity training needs positives and negatives")
    init = init_similarity_model(
        d_in=table.dim, d_hidden=config.rgcn_hidden, d_lo=config.rgcn_out,
        mlp_hidden=config.mlp_hidden, seed=seed,
        embedding_checksum=table.checksum())
    return train_similarity(pairs, config.similarity_train(seed=seed), model=init)


def fit_artifacts(
    dataset: LabeledDataset,
    train: list[EventSequence],
    config: RunConfig,
    seed: int | None = None,
    similarity_mode: str = "fekg",
) -> Artifacts:
    """Train every offline component on the given training split.

    similarity_mode "none" skips the matcher (used by the Jaccard ablation).
    """
    if similarity_mode not in ("fekg", "fpg", "none"):
        raise InvalidParams(f"unknown similarity_mode {similarity_mode!r}")
    seed = config.seed if seed is None else seed
    artifacts = fit_base_artifacts(dataset, train, config, seed=seed)
    if similarity_mode != "none":
        artifacts.sim_model = train_similarity_model(
            artifacts, train, config, seed, similarity_mode)
    return artifacts
