"""Candidate root-cause event ranking and the end-to-end diagnosis entry point.

Once the best-matching fault class names a root-cause event type, the
concrete events of that type are ranked by a weighted fusion of two dense
ranks: nearer to the alarm in the graph is better, earlier before the alarm
is better.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .errors import AlarmNotInGraph, EmptyKnowledgeBase, InvalidParams
from .events import Event, EventSequence
from .fekg import Fekg
from .fpg import Fpg, FpgConfig, build_fpg, undirected_distance
from .relations import RelationModels
from .rgcn import RgcnSimilarityModel, match, to_multigraph
from .embedding import EmbeddingTable


@dataclass
class CandidateEvent:
    event: Event
    time_interval_s: float  # |candidate - alarm|
    distance_hops: float  # undirected hops; unreachable -> |V|+1

    def __post_init__(self):
        if self.time_interval_s < 0 or self.distance_hops < 0:
            raise InvalidParams("candidate metrics must be >= 0")


@dataclass(frozen=True)
class RankingWeights:
    w_t: float = 0.5
    w_d: float = 0.5
    top_n: int = 5

    def __post_init__(self):
        if self.w_t < 0 or self.w_d < 0 or self.w_t + self.w_d <= 0:
            raise InvalidParams("weights must be >= 0 and not both zero")
        if self.top_n < 1:
            raise InvalidParams("top_n must be >= 1")


def _dense_rank_values(values: list[float], best_low: bool) -> list[int]:
    """Map each value to n - dense_rank + 1, so the best value scores n."""
    n = len(values)
    distinct = sorted(set(values), reverse=not best_low)
    rank_of = {v: r for r, v in enumerate(distinct, start=1)}
    return [n - rank_of[v] + 1 for v in values]


def rank_candidates(
    online: Fpg, alarm: Event, root_type: str, weights: RankingWeights
) -> list[tuple[Event, float]]:
    """Events of the root-cause type scored by w_t*N_t + w_d*N_d, best first.

    N_d grows as graph distance to the alarm shrinks; N_t grows as the time
    interval to the alarm grows (root causes precede their symptoms). Ties
    break by (distance, timestamp, event_id); at most top_n returned. An
    alarm outside the graph raises; a root type with no events returns [].
    """
    if alarm.event_id not in online.nodes:
        raise AlarmNotInGraph(f"alarm {alarm.event_id!r} is not in the online graph")
    pool = [e for e in online.sorted_events() if e.event_type == root_type]
    if not pool:
        return []
    sentinel = float(online.n_nodes() + 1)
    candidates = []
    for e in pool:
        hops = undirected_distance(online, e.event_id, alarm.event_id)
        candidates.append(CandidateEvent(
            event=e,
            time_interval_s=abs(alarm.timestamp - e.timestamp) / 1000.0,
            distance_hops=float(hops) if hops is not None else sentinel,
        ))
    n_t = _dense_rank_values([c.time_interval_s for c in candidates], best_low=False)
    n_d = _dense_rank_values([c.distance_hops for c in candidates], best_low=True)
    scored = [
        (c, weights.w_t * t + weights.w_d * d)
        for c, t, d in zip(candidates, n_t, n_d)
    ]
    scored.sort(key=lambda item: (
        -item[1], item[0].distance_hops, item[0].event.timestamp, item[0].event.event_id))
    return [(c.event, score) for c, score in scored[: weights.top_n]]


@dataclass
class DiagnosisModels:
    relations: RelationModels
    similarity: RgcnSimilarityModel
    table: EmbeddingTable


@dataclass
class DiagnosisConfig:
    fpg: FpgConfig = field(default_factory=FpgConfig)
    weights: RankingWeights = field(default_factory=RankingWeights)
    top_k_classes: int = 3


@dataclass
class DiagnosisReport:
    failure_id: str
    ranked_classes: list[tuple[str, float]]
    candidates: dict[str, list[tuple[str, float]]]  # class -> (event_id, score)
    latency_ms: float
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "failure_id": self.failure_id,
            "ranked_classes": [[c, p] for c, p in self.ranked_classes],
            "candidates": {c: [[eid, s] for eid, s in evs]
                           for c, evs in self.candidates.items()},
            "latency_ms": self.latency_ms,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def render_text(self) -> str:
        lines = [f"diagnosis for {self.failure_id} ({self.latency_ms:.1f} ms)"]
        lines.append("ranked fault classes:")
        for i, (c, p) in enumerate(self.ranked_classes, start=1):
            lines.append(f"  {i:2d}. {c}  p_similar={p:.4f}")
        for c, evs in self.candidates.items():
            lines.append(f"candidate root-cause events for {c}:")
            if not evs:
                lines.append("  (no events of the root-cause type in the window)")
            for i, (eid, s) in enumerate(evs, start=1):
                lines.append(f"  {i:2d}. {eid}  score={s:.2f}")
        return "\n".join(lines)


def diagnose(
    online_events: EventSequence,
    kb: list[Fekg],
    models: DiagnosisModels,
    cfg: DiagnosisConfig | None = None,
) -> DiagnosisReport:
    """Build the online graph, match it against the knowledge base, and rank
    concrete candidates for the top matched classes."""
    cfg = cfg or DiagnosisConfig()
    if not kb:
        raise EmptyKnowledgeBase("knowledge base is empty")
    t0 = time.perf_counter()
    stats = models.relations.ctx.stats
    online = build_fpg(online_events, cfg.fpg, stats, models.relations,
                       apply_window_cap=True)
    online_mg = to_multigraph(online, models.table, cfg.fpg.window_cap)
    kgs = []
    roots = {}
    for fekg in kb:
        roots[fekg.fault_class] = fekg.root_cause_type
        usable = [sg for sg in fekg.subgraphs if not sg.is_empty()] or fekg.subgraphs
        for sg in usable:
            kgs.append((fekg.fault_class,
                        to_multigraph(sg, models.table, cfg.fpg.window_cap)))
    ranked = match(online_mg, kgs, models.similarity)

    if online_events.alarm_event_id is not None:
        alarm = next((e for e in online.nodes.values()
                      if e.event_id == online_events.alarm_event_id), None)
        if alarm is None:
            raise AlarmNotInGraph(
                f"alarm {online_events.alarm_event_id!r} fell outside the window")
    else:
        alarm = online.sorted_events()[-1] if online.nodes else None
        if alarm is None:
            raise AlarmNotInGraph("empty online sequence has no alarm event")

    candidates = {}
    for fault_class, _ in ranked[: cfg.top_k_classes]:
        found = rank_candidates(online, alarm, roots[fault_class], cfg.weights)
        candidates[fault_class] = [(e.event_id, score) for e, score in found]

    latency_ms = (time.perf_counter() - t0) * 1000.0
    return DiagnosisReport(
        failure_id=online_events.failure_id,
        ranked_classes=ranked,
        candidates=candidates,
        latency_ms=latency_ms,
        provenance={
            "online_nodes": online.n_nodes(),
            "online_edges": online.n_edges(),
            "kb_classes": len(kb),
            "kb_subgraphs": len(kgs),
            "window_cap": cfg.fpg.window_cap,
            "weights": {"w_t": cfg.weights.w_t, "w_d": cfg.weights.w_d,
                        "top_n": cfg.weights.top_n},
        },
    )
