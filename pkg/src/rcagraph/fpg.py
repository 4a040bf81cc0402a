"""Fault propagation graph construction.

Builds a directed multigraph of concrete events for one failure: events are
inserted earliest-first; each new event is attached to up to M existing
events whose type correlation clears the threshold and whose pair the
existence classifier accepts, with edge kinds assigned by the kind
classifier. Edges always point from the earlier event to the later one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import InvalidParams
from .events import Event, EventSequence
from .relations import RelationKind
from .stats import HistoricalStats, build_stats, correlation  # noqa: F401  (module surface)

if TYPE_CHECKING:
    from .relations import RelationModels


@dataclass
class Fpg:
    """Nodes keyed by event id; edges are (src_id, kind, dst_id) triples."""

    nodes: dict[str, Event] = field(default_factory=dict)
    edges: set[tuple[str, RelationKind, str]] = field(default_factory=set)

    def add_node(self, event: Event) -> None:
        self.nodes[event.event_id] = event

    def add_edge(self, src_id: str, kind: RelationKind, dst_id: str) -> None:
        if src_id == dst_id:
            raise InvalidParams(f"self-loop on {src_id!r}")
        src, dst = self.nodes.get(src_id), self.nodes.get(dst_id)
        if src is None or dst is None:
            raise InvalidParams(f"edge endpoint missing: {src_id!r} -> {dst_id!r}")
        if src.sort_key() > dst.sort_key():
            raise InvalidParams(
                f"edge against time order: {src_id!r} -> {dst_id!r}")
        self.edges.add((src_id, kind, dst_id))

    def n_nodes(self) -> int:
        return len(self.nodes)

    def n_edges(self) -> int:
        return len(self.edges)

    def sorted_events(self) -> list[Event]:
        return sorted(self.nodes.values(), key=Event.sort_key)

    def to_json_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "event_id": e.event_id,
                    "event_type": e.event_type,
                    "entity": e.entity,
                    "timestamp_ms": e.timestamp,
                    "attributes": e.attributes,
                }
                for e in self.sorted_events()
            ],
            "edges": sorted([s, k.value, d] for s, k, d in self.edges),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Fpg":
        g = cls()
        for n in doc["nodes"]:
            g.add_node(Event(n["event_id"], n["event_type"], n["entity"],
                             n["timestamp_ms"], dict(n.get("attributes") or {})))
        for s, k, d in doc["edges"]:
            g.add_edge(s, RelationKind(k), d)
        return g

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Fpg":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class FpgConfig:
    max_associated: int = 3  # M: attachments per inserted event
    correlation_threshold: float = 0.55  # theta
    window_cap: int = 100

    def __post_init__(self):
        if self.max_associated < 1:
            raise InvalidParams("max_associated must be >= 1")
        if not 0.0 <= self.correlation_threshold <= 1.0:
            raise InvalidParams("correlation_threshold must be in [0, 1]")
        if self.window_cap < 1:
            raise InvalidParams("window_cap must be >= 1")


@dataclass
class CandidateGraph:
    """One candidate insertion: the base graph plus attachments for the new event."""

    base: Fpg
    new_edges: list[tuple[str, str]]  # (existing event id, new event id)
    score: float

    def __post_init__(self):
        if not self.new_edges:
            raise InvalidParams("candidate graph must attach at least one edge")


def get_best_candidate(
    fpg: Fpg,
    new_event: Event,
    cfg: FpgConfig,
    stats: HistoricalStats,
    models: "RelationModels",
) -> CandidateGraph | None:
    """Best-scoring way to attach new_event to the current graph.

    Attachment candidates are existing events whose type correlation with
    the new event's type clears the threshold and whose pair the existence
    classifier accepts. The top min(M, available) are bundled as a single
    candidate graph scored by its best edge; None when nothing qualifies.
    """
    scored = []
    for prior in fpg.sorted_events():
        score = correlation(prior.event_type, new_event.event_type, stats)
        if score < cfg.correlation_threshold:
            continue
        if not models.exists_between(prior, new_event):
            continue
        scored.append((score, prior))
    if not scored:
        return None
    scored.sort(key=lambda item: (-item[0], -item[1].timestamp, item[1].event_id))
    chosen = scored[: cfg.max_associated]
    return CandidateGraph(
        base=fpg,
        new_edges=[(prior.event_id, new_event.event_id) for _, prior in chosen],
        score=chosen[0][0],
    )


def build_fpg(
    q: EventSequence,
    cfg: FpgConfig,
    stats: HistoricalStats,
    models: "RelationModels",
    apply_window_cap: bool = True,
) -> Fpg:
    """Construct the propagation graph for one failure, earliest event first.

    The first event enters isolated; each later event either attaches via
    its best candidate graph or enters isolated when no candidate clears
    threshold and classifier. Online sequences longer than the window cap
    keep only their most recent window_cap events (historical builds pass
    apply_window_cap=False).
    """
    events = q.events
    if apply_window_cap and len(events) > cfg.window_cap:
        events = events[-cfg.window_cap:]
    fpg = Fpg()
    for e0 in events:
        if not fpg.nodes:
            fpg.add_node(e0)
            continue
        best = get_best_candidate(fpg, e0, cfg, stats, models)
        fpg.add_node(e0)
        if best is None:
            continue
        for src_id, dst_id in best.new_edges:
            kind = models.kind_between(fpg.nodes[src_id], e0)
            fpg.add_edge(src_id, kind, dst_id)
    return fpg


def connected_components(g: Fpg) -> list[set[str]]:
    """Weakly connected components as sets of event ids (singletons included)."""
    adj: dict[str, set[str]] = {eid: set() for eid in g.nodes}
    for s, _, d in g.edges:
        adj[s].add(d)
        adj[d].add(s)
    seen: set[str] = set()
    components = []
    for eid in sorted(g.nodes):
        if eid in seen:
            continue
        comp = {eid}
        stack = [eid]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in comp:
                    comp.add(nxt)
                    stack.append(nxt)
        seen |= comp
        components.append(comp)
    return components


def undirected_distance(g: Fpg, src_id: str, dst_id: str) -> int | None:
    """Shortest undirected hop count between two nodes; None if unreachable."""
    if src_id not in g.nodes or dst_id not in g.nodes:
        return None
    if src_id == dst_id:
        return 0
    adj: dict[str, set[str]] = {eid: set() for eid in g.nodes}
    for s, _, d in g.edges:
        adj[s].add(d)
        adj[d].add(s)
    dist = {src_id: 0}
    frontier = [src_id]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    if v == dst_id:
                        return dist[v]
                    nxt.append(v)
        frontier = nxt
    return None
