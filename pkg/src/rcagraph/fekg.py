"""Per-fault-class knowledge graphs distilled from historical propagation graphs.

Two pipelines are exposed: the default clusters a class's graphs by
abstract-structure similarity and intersects each cluster into a common-core
subgraph; the alternative unions chronologically chained relations that the
existence classifier accepts across instances into one merged graph.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidParams
from .events import EventSequence
from .fpg import Fpg
from .relations import RelationKind, RelationModels

logger = logging.getLogger(__name__)


@dataclass
class AbstractFpg:
    """Type-level graph: nodes are event types, edges are type triples."""

    nodes: set[str] = field(default_factory=set)
    edges: set[tuple[str, RelationKind, str]] = field(default_factory=set)

    def __post_init__(self):
        for s, _, d in self.edges:
            if s not in self.nodes or d not in self.nodes:
                raise InvalidParams(f"edge endpoint missing: {s!r} -> {d!r}")

    def is_empty(self) -> bool:
        return not self.nodes

    def to_json_dict(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "edges": sorted([s, k.value, d] for s, k, d in self.edges),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AbstractFpg":
        return cls(nodes=set(doc["nodes"]),
                   edges={(s, RelationKind(k), d) for s, k, d in doc["edges"]})


@dataclass
class ClusterConfig:
    mu: float = 0.5  # minimum inter-cluster linkage to keep merging

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise InvalidParams("mu must be in [0, 1]")


@dataclass(frozen=True)
class RootInfo:
    root_cause_type: str
    propagation_path: tuple[str, ...]


@dataclass
class Fekg:
    fault_class: str
    subgraphs: list[AbstractFpg]
    root_cause_type: str
    propagation_path: list[str]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.subgraphs:
            raise InvalidParams("FEKG needs at least one subgraph")
        if all(sg.is_empty() for sg in self.subgraphs):
            logger.warning("FEKG %r has only empty subgraphs", self.fault_class)
            return
        if not any(self.root_cause_type in sg.nodes for sg in self.subgraphs):
            raise InvalidParams(
                f"root cause type {self.root_cause_type!r} absent from every "
                f"subgraph of {self.fault_class!r}")
        for a, b in zip(self.propagation_path, self.propagation_path[1:]):
            if not any((a, k, b) in sg.edges for sg in self.subgraphs
                       for k in RelationKind):
                raise InvalidParams(
                    f"propagation step {a!r} -> {b!r} absent from every "
                    f"subgraph of {self.fault_class!r}")

    def to_json_dict(self) -> dict:
        return {
            "fault_class": self.fault_class,
            "root_cause_type": self.root_cause_type,
            "propagation_path": list(self.propagation_path),
            "subgraphs": [sg.to_json_dict() for sg in self.subgraphs],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Fekg":
        return cls(
            fault_class=doc["fault_class"],
            subgraphs=[AbstractFpg.from_json_dict(sg) for sg in doc["subgraphs"]],
            root_cause_type=doc["root_cause_type"],
            propagation_path=list(doc["propagation_path"]),
            provenance=dict(doc.get("provenance") or {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Fekg":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def abstract(g: Fpg) -> AbstractFpg:
    """Replace concrete events by their types; duplicate triples collapse."""
    nodes = {e.event_type for e in g.nodes.values()}
    edges = {(g.nodes[s].event_type, k, g.nodes[d].event_type)
             for s, k, d in g.edges}
    return AbstractFpg(nodes=nodes, edges=edges)


def graph_similarity_jaccard(a: AbstractFpg, b: AbstractFpg) -> float:
    """Jaccard over triple sets; node-set fallback when neither has edges."""
    if a.edges or b.edges:
        union = a.edges | b.edges
        return len(a.edges & b.edges) / len(union)
    if a.nodes or b.nodes:
        return len(a.nodes & b.nodes) / len(a.nodes | b.nodes)
    return 1.0


def graph_clustering(s: list[Fpg], mu: float) -> list[list[Fpg]]:
    """Agglomerative average-linkage clustering of abstracted graphs.

    Starts from singletons, repeatedly merges the pair of clusters with the
    largest linkage (average pairwise Jaccard similarity of members), and
    stops when the best linkage drops below mu or one cluster remains.
    """
    if not s:
        raise InvalidParams("cannot cluster an empty graph collection")
    abstracts = [abstract(g) for g in s]
    sim = [[graph_similarity_jaccard(abstracts[i], abstracts[j])
            for j in range(len(s))] for i in range(len(s))]
    clusters: list[list[int]] = [[i] for i in range(len(s))]

    def linkage(p: list[int], q: list[int]) -> float:
        return sum(sim[i][j] for i in p for j in q) / (len(p) * len(q))

    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                l = linkage(clusters[i], clusters[j])
                if best is None or l > best[0]:
                    best = (l, i, j)
        if best[0] < mu:
            break
        _, i, j = best
        merged = clusters[i] + clusters[j]
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)]
        clusters.append(merged)
    return [[s[i] for i in sorted(c)] for c in sorted(clusters, key=min)]


def intersect_cluster(cluster: list[Fpg]) -> AbstractFpg:
    """Common core of a cluster: node and triple sets intersected pairwise.

    The accumulator starts at the first member's abstraction (an empty start
    would erase everything) and narrows with each remaining member.
    """
    if not cluster:
        raise InvalidParams("cannot intersect an empty cluster")
    sg = abstract(cluster[0])
    for g in cluster[1:]:
        other = abstract(g)
        sg = AbstractFpg(nodes=sg.nodes & other.nodes, edges=sg.edges & other.edges)
    return sg


def build_fekg_cluster(
    s: list[Fpg],
    cfg: ClusterConfig,
    fault_class: str,
    root_info: RootInfo,
) -> Fekg:
    """Cluster-then-intersect pipeline: one subgraph per cluster."""
    clusters = graph_clustering(s, cfg.mu)
    subgraphs = []
    for cluster in clusters:
        sg = intersect_cluster(cluster)
        if sg.is_empty():
            logger.warning("empty intersection in a %r cluster of size %d",
                           fault_class, len(cluster))
        subgraphs.append(sg)
    return Fekg(
        fault_class=fault_class,
        subgraphs=subgraphs,
        root_cause_type=root_info.root_cause_type,
        propagation_path=list(root_info.propagation_path),
        provenance={
            "pipeline": "cluster-intersect",
            "mu": cfg.mu,
            "n_instances": len(s),
            "n_clusters": len(clusters),
        },
    )


def important_types(instances: list[EventSequence], min_support: float) -> set[str]:
    """Types present in at least min_support of the class's instances."""
    support: Counter[str] = Counter()
    for seq in instances:
        support.update(set(seq.type_sequence()))
    needed = min_support * len(instances)
    return {t for t, n in support.items() if n >= needed}


def build_fekg_union(
    instances: list[EventSequence],
    models: RelationModels,
    root_info: RootInfo,
    min_support: float = 0.5,
) -> Fekg:
    """Relation-union pipeline: chain important events chronologically per
    instance, keep pairs the existence classifier accepts, union across
    instances, and merge into a single type-level subgraph."""
    if not instances:
        raise InvalidParams("no instances")
    keep = important_types(instances, min_support)
    nodes: set[str] = set()
    edges: set[tuple[str, RelationKind, str]] = set()
    for seq in instances:
        chain = [e for e in seq.events if e.event_type in keep]
        nodes.update(e.event_type for e in chain)
        for a, b in zip(chain, chain[1:]):
            if not models.exists_between(a, b):
                continue
            if a.event_type == b.event_type:
                continue
            edges.add((a.event_type, models.kind_between(a, b), b.event_type))
    sg = AbstractFpg(nodes=nodes, edges=edges)
    return Fekg(
        fault_class=instances[0].fault_class or "unknown",
        subgraphs=[sg],
        root_cause_type=root_info.root_cause_type,
        propagation_path=list(root_info.propagation_path),
        provenance={
            "pipeline": "relation-union",
            "min_support": min_support,
            "n_instances": len(instances),
        },
    )
