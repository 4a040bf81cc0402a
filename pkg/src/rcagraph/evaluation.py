"""Metrics, dataset splitting, and the ablation harness.

A@K is the fraction of cases whose ground truth appears in the first K
suggestions; MAR is the mean over cases of the average rank of that case's
ground truths (lower is better); P/R/F1 are micro-averaged over rank-1
class predictions. Experiments repeat over seeds with the 40/20/40
stratified split and identical seeds across pipeline variants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .errors import EmptyCases, InvalidParams
from .events import EventSequence
from .fekg import graph_similarity_jaccard, abstract
from .fpg import build_fpg
from .pipeline import (Artifacts, LabeledDataset, fit_artifacts,
                       fit_base_artifacts, train_similarity_model)
from .ranking import DiagnosisConfig, diagnose, rank_candidates
from .rgcn import KnowledgeBaseMatcher, to_multigraph

VARIANTS = ("full", "no_kg", "no_gcn")


@dataclass
class EvalCase:
    failure_id: str
    ground_truth_class: str
    ground_truth_events: set[str] = field(default_factory=set)
    predicted_ranking: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.predicted_ranking)) != len(self.predicted_ranking):
            raise InvalidParams(
                f"duplicate entries in ranking for {self.failure_id!r}")

    def truths(self) -> set[str]:
        return self.ground_truth_events or {self.ground_truth_class}


def a_at_k(cases: list[EvalCase], k: int) -> float:
    """Fraction of cases whose ground truth is hit within the first k ranks."""
    if not cases:
        raise EmptyCases("no evaluation cases")
    if k < 1:
        raise InvalidParams("k must be >= 1")
    hits = sum(1 for c in cases if c.truths() & set(c.predicted_ranking[:k]))
    return hits / len(cases)


def mar(cases: list[EvalCase]) -> float:
    """Mean over cases of the average 1-based rank of the case's truths.

    A truth absent from the ranking is penalized with rank len(ranking)+1.
    """
    if not cases:
        raise EmptyCases("no evaluation cases")
    values = []
    for c in cases:
        position = {x: r for r, x in enumerate(c.predicted_ranking, start=1)}
        penalty = len(c.predicted_ranking) + 1
        ranks = [position.get(t, penalty) for t in sorted(c.truths())]
        values.append(sum(ranks) / len(ranks))
    return sum(values) / len(values)


def prf1(cases: list[EvalCase], k: int = 1) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over rank-k class predictions.

    With k=1 (the default) the first-ranked class is the predicted label;
    larger k counts a prediction correct when the truth is within the
    first k.
    """
    if not cases:
        raise EmptyCases("no evaluation cases")
    tp = fp = fn = 0
    for c in cases:
        head = c.predicted_ranking[:k]
        if not head:
            fn += 1
            continue
        if c.ground_truth_class in head:
            tp += 1
        else:
            fp += 1
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.4
    validation: float = 0.2
    test: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.validation + self.test - 1.0) > 1e-9:
            raise InvalidParams("split fractions must sum to 1")


def _apportion(n: int, fractions: tuple[float, float, float]) -> list[int]:
    base = [int(np.floor(f * n)) for f in fractions]
    remainders = [f * n - b for f, b in zip(fractions, base)]
    for _ in range(n - sum(base)):
        i = max(range(3), key=lambda j: (remainders[j], -j))
        base[i] += 1
        remainders[i] = -1.0
    return base


def split(
    failures: list[EventSequence], cfg: SplitConfig
) -> tuple[list[EventSequence], list[EventSequence], list[EventSequence]]:
    """Deterministic stratified 3-way split.

    Classes with >= 2 instances are guaranteed at least one in train and
    one in test; remaining slots chase the global bucket targets.
    """
    fractions = (cfg.train, cfg.validation, cfg.test)
    target = _apportion(len(failures), fractions)
    rng = np.random.default_rng(cfg.seed)
    by_class: dict[str, list[EventSequence]] = {}
    for seq in failures:
        by_class.setdefault(seq.fault_class or "unknown", []).append(seq)
    assigned = [0, 0, 0]
    buckets: tuple[list, list, list] = ([], [], [])
    for fault_class in sorted(by_class):
        members = sorted(by_class[fault_class], key=lambda s: s.failure_id)
        perm = rng.permutation(len(members))
        members = [members[int(i)] for i in perm]
        counts = [0, 0, 0]
        if len(members) >= 2:
            counts[0] = 1
            counts[2] = 1
        for _ in range(len(members) - sum(counts)):
            deficits = [target[b] - assigned[b] - counts[b] for b in range(3)]
            b = max((0, 2, 1), key=lambda j: deficits[j])
            counts[b] += 1
        for b in range(3):
            assigned[b] += counts[b]
        buckets[0].extend(members[: counts[0]])
        buckets[1].extend(members[counts[0]: counts[0] + counts[1]])
        buckets[2].extend(members[counts[0] + counts[1]:])
    return buckets


def _rank_classes_no_gcn(artifacts: Artifacts, online_fpg) -> list[tuple[str, float]]:
    online_abstract = abstract(online_fpg)
    scores = {}
    for fault_class, fekg in artifacts.fekgs.items():
        scores[fault_class] = max(
            graph_similarity_jaccard(online_abstract, sg) for sg in fekg.subgraphs)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def _metric_bundle(class_cases: list[EvalCase], event_cases: list[EvalCase]) -> dict:
    precision, recall, f1 = prf1(class_cases)
    bundle = {
        "a_at_1": a_at_k(class_cases, 1),
        "a_at_2": a_at_k(class_cases, 2),
        "a_at_3": a_at_k(class_cases, 3),
        "a_at_5": a_at_k(class_cases, 5),
        "mar": mar(class_cases),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "n_test": len(class_cases),
    }
    if event_cases:
        bundle["event_a_at_5"] = a_at_k(event_cases, 5)
    return bundle


def _evaluate_variant(
    dataset: LabeledDataset,
    artifacts: Artifacts,
    variant: str,
    train: list[EventSequence],
    test: list[EventSequence],
    config: RunConfig,
) -> dict:
    fpg_cfg = config.fpg()
    stats = artifacts.rel_models.ctx.stats
    matcher = None
    if variant == "full":
        entries = [
            (fault_class, to_multigraph(sg, artifacts.table, config.window_cap))
            for fault_class, fekg in sorted(artifacts.fekgs.items())
            for sg in fekg.subgraphs if not sg.is_empty()
        ]
        matcher = KnowledgeBaseMatcher(entries, artifacts.sim_model)
    elif variant == "no_kg":
        entries = [
            (seq.fault_class or "unknown",
             to_multigraph(artifacts.train_fpgs[seq.failure_id],
                           artifacts.table, config.window_cap))
            for seq in train
        ]
        matcher = KnowledgeBaseMatcher(entries, artifacts.sim_model)

    class_cases = []
    event_cases = []
    weights = config.weights()
    for seq in test:
        online = build_fpg(seq, fpg_cfg, stats, artifacts.rel_models,
                           apply_window_cap=True)
        if variant == "no_gcn":
            ranked = _rank_classes_no_gcn(artifacts, online)
        else:
            ranked = matcher.rank(to_multigraph(online, artifacts.table,
                                                config.window_cap))
        truth = dataset.truth[seq.failure_id]
        class_cases.append(EvalCase(
            failure_id=seq.failure_id,
            ground_truth_class=truth["fault_class"],
            predicted_ranking=[c for c, _ in ranked],
        ))
        top_class = ranked[0][0]
        if top_class in artifacts.fekgs and seq.alarm_event_id in online.nodes:
            alarm = online.nodes[seq.alarm_event_id]
            found = rank_candidates(
                online, alarm, artifacts.fekgs[top_class].root_cause_type, weights)
            event_cases.append(EvalCase(
                failure_id=seq.failure_id,
                ground_truth_class=truth["fault_class"],
                ground_truth_events={truth["root_event_id"]},
                predicted_ranking=[e.event_id for e, _ in found],
            ))
    return _metric_bundle(class_cases, event_cases)


def run_ablation(
    dataset: LabeledDataset,
    variant: str,
    config: RunConfig | None = None,
    seed: int = 0,
) -> dict:
    """Train on the seed's split and evaluate one pipeline variant.

    full matches online graphs against knowledge graphs with the similarity
    model; no_kg matches against raw historical propagation graphs (the
    knowledge-graph construction is bypassed); no_gcn replaces the learned
    similarity with type-level Jaccard. Split and seeds are shared across
    variants.
    """
    if variant not in VARIANTS:
        raise InvalidParams(f"unknown variant {variant!r}")
    config = config or RunConfig()
    split_cfg = SplitConfig(train=config.split_train,
                            validation=config.split_validation,
                            test=config.split_test, seed=seed)
    train, _val, test = split(dataset.sequences, split_cfg)
    mode = {"full": "fekg", "no_kg": "fpg", "no_gcn": "none"}[variant]
    artifacts = fit_artifacts(dataset, train, config, seed=seed,
                              similarity_mode=mode)
    return _evaluate_variant(dataset, artifacts, variant, train, test, config)


def evaluate_variants(dataset: LabeledDataset, config: RunConfig | None = None) -> dict:
    """All three variants over the configured seeds; deterministic output.

    The stats/embeddings/classifiers/graphs are shared per seed (they do not
    depend on the variant); only the similarity model is retrained per
    matching mode, exactly as run_ablation would.
    """
    config = config or RunConfig()
    per_variant: dict[str, dict] = {v: {} for v in VARIANTS}
    for seed in config.eval_seeds:
        split_cfg = SplitConfig(train=config.split_train,
                                validation=config.split_validation,
                                test=config.split_test, seed=seed)
        train, _val, test = split(dataset.sequences, split_cfg)
        base = fit_base_artifacts(dataset, train, config, seed=seed)
        for variant in VARIANTS:
            artifacts = base
            if variant in ("full", "no_kg"):
                mode = "fekg" if variant == "full" else "fpg"
                artifacts = replace(
                    base, sim_model=train_similarity_model(
                        base, train, config, seed, similarity_mode=mode))
            per_variant[variant][str(seed)] = _evaluate_variant(
                dataset, artifacts, variant, train, test, config)
    out: dict = {"variants": {}, "seeds": list(config.eval_seeds)}
    for variant in VARIANTS:
        per_seed = per_variant[variant]
        keys = sorted(k for k in next(iter(per_seed.values())) if k != "n_test")
        mean = {k: sum(b[k] for b in per_seed.values()) / len(per_seed) for k in keys}
        out["variants"][variant] = {"per_seed": per_seed, "mean": mean}
    return out


def measure_latency(
    dataset: LabeledDataset,
    artifacts: Artifacts,
    cases: list[EventSequence],
    cfg: DiagnosisConfig | None = None,
) -> list[float]:
    """Wall-clock diagnose() milliseconds per case (artifacts preloaded)."""
    kb = [artifacts.fekgs[c] for c in sorted(artifacts.fekgs)]
    models = artifacts.diagnosis_models()
    samples = []
    for seq in cases:
        t0 = time.perf_counter()
        diagnose(seq, kb, models, cfg)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return samples
