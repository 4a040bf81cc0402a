"""Deterministic fault-injection simulator.

Generates desk-scale labeled failure datasets over a random service
dependency topology: each case injects one fault class at a random location,
propagates typed events along dependency edges per the class's rules, and
sprinkles noise events drawn from a disjoint type pool. Ground truth (class,
root event, propagation parentage) is emitted alongside, so downstream
training needs no manual labeling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParams
from .events import Event, EventSequence, RawRecord, RawSource, TemplateRule, save_events

NOISE_TYPES = [f"NOISE_{k:02d}" for k in range(12)]


@dataclass(frozen=True)
class Topology:
    services: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]  # caller -> callee

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise InvalidParams(f"self-loop on {a!r}")
        if len(self.services) > 1 and not self._weakly_connected():
            raise InvalidParams("topology is not weakly connected")

    def _weakly_connected(self) -> bool:
        adj: dict[str, set[str]] = {s: set() for s in self.services}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen = {self.services[0]}
        stack = [self.services[0]]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.services)

    def out_neighbors(self, service: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == service)


@dataclass(frozen=True)
class PropagationRule:
    trigger_type: str
    produced_type: str
    delay_ms: tuple[int, int]  # inclusive bounds
    probability: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.probability <= 1.0:
            raise InvalidParams("rule probability must be in (0, 1]")
        if self.delay_ms[0] < 0 or self.delay_ms[1] < self.delay_ms[0]:
            raise InvalidParams(f"bad delay bounds {self.delay_ms}")


@dataclass(frozen=True)
class FaultTemplate:
    class_id: str
    root_event_type: str
    rules: tuple[PropagationRule, ...]
    noise_rate: float = 10.0  # unrelated events per minute

    def trunk_path(self) -> list[str]:
        """Type chain reached from the root through probability-1 rules."""
        path = [self.root_event_type]
        while True:
            nxt = [r for r in self.rules
                   if r.trigger_type == path[-1] and r.probability == 1.0]
            if not nxt or nxt[0].produced_type in path:
                return path
            path.append(nxt[0].produced_type)


@dataclass
class GeneratedCase:
    sequence: EventSequence
    root_event_id: str
    propagation_path: list[str]
    parents: dict[str, str]  # produced event id -> trigger event id
    raw_records: list[RawRecord] = field(default_factory=list)


def generate_topology(n_services: int, edge_density: float, seed: int) -> Topology:
    """Random connected DAG-like dependency graph (edges go low->high index)."""
    if n_services < 2:
        raise InvalidParams("need at least 2 services")
    if not 0.0 <= edge_density <= 1.0:
        raise InvalidParams("edge_density must be in [0, 1]")
    rng = np.random.default_rng(seed)
    services = tuple(f"svc-{i:02d}" for i in range(n_services))
    edges = {(services[int(rng.integers(0, j))], services[j])
             for j in range(1, n_services)}
    for i in range(n_services):
        for j in range(i + 1, n_services):
            pair = (services[i], services[j])
            if pair not in edges and rng.random() < edge_density:
                edges.add(pair)
    return Topology(services=services, edges=tuple(sorted(edges)))


FAULT_KINDS = ["cpu_overload", "mem_overload", "net_delay", "pod_kill", "config_error"]
_KIND_TAGS = {k: k.upper() for k in FAULT_KINDS}


def default_templates(n_classes: int = 20) -> list[FaultTemplate]:
    """Catalog of fault classes: five base kinds in location/variant flavors.

    Each class has a deterministic trunk (injection -> kind anomaly ->
    saturation -> latency spike -> SLO breach alarm) plus two optional side
    branches, so instances of the same class share a common core but are not
    identical.
    """
    if n_classes < 1:
        raise InvalidParams("n_classes must be >= 1")
    templates = []
    for c in range(n_classes):
        kind = FAULT_KINDS[c % len(FAULT_KINDS)]
        tag = _KIND_TAGS[kind]
        v = c // len(FAULT_KINDS)
        root = f"{tag}_INJECT_V{v}"
        anomaly = f"{tag}_ANOMALY"
        saturation = f"{tag}_SATURATION_V{v}"
        rules = (
            PropagationRule(root, anomaly, (1100, 1400)),
            PropagationRule(anomaly, saturation, (1100, 1400)),
            PropagationRule(saturation, "LATENCY_SPIKE", (1100, 1400)),
            PropagationRule("LATENCY_SPIKE", f"SLO_BREACH_{tag}", (1100, 1400)),
            PropagationRule(anomaly, f"{tag}_SIDE_V{v}", (1200, 1500), probability=0.6),
            PropagationRule(saturation, "ERROR_RATE_HIGH", (1200, 1500), probability=0.4),
        )
        templates.append(FaultTemplate(
            class_id=f"{kind}_v{v}", root_event_type=root, rules=rules))
    return templates


def template_event_types(templates: list[FaultTemplate]) -> list[str]:
    types = set(NOISE_TYPES)
    for t in templates:
        types.add(t.root_event_type)
        for r in t.rules:
            types.update((r.trigger_type, r.produced_type))
    return sorted(types)


def default_catalog(templates: list[FaultTemplate]) -> list[TemplateRule]:
    """Abstraction rules for the simulator's raw payload format."""
    return [
        TemplateRule(pattern=rf"type={tid};metric=(?P<metric>[0-9.]+)", event_type=tid)
        for tid in template_event_types(templates)
    ]


def _raw_payload(event_type: str, rng: np.random.Generator) -> str:
    return f"type={event_type};metric={rng.random():.4f}"


def generate_dataset(
    topo: Topology,
    templates: list[FaultTemplate],
    n_failures: int,
    seed: int,
) -> list[GeneratedCase]:
    """Simulate labeled failures, one template per case round-robin.

    Deterministic per seed. The alarm is the terminal propagated event; the
    root event is the earliest non-noise event. Classes recur: with the
    default 160/20 sizing every class gets 8 instances.
    """
    if n_failures < 1:
        raise InvalidParams("n_failures must be >= 1")
    if not templates:
        raise InvalidParams("templates must be non-empty")
    for t in templates:
        if not any(r.trigger_type == t.root_event_type and r.probability == 1.0
                   for r in t.rules):
            raise InvalidParams(
                f"template {t.class_id!r} has no guaranteed propagation from its root")
    rng = np.random.default_rng(seed)
    ordered = sorted(templates, key=lambda t: t.class_id)
    cases = []
    for i in range(n_failures):
        template = ordered[i % len(ordered)]
        cases.append(_simulate_case(f"F{i:04d}", template, topo, i * 1_000_000, rng))
    return cases


def _simulate_case(
    failure_id: str,
    template: FaultTemplate,
    topo: Topology,
    base_time: int,
    rng: np.random.Generator,
) -> GeneratedCase:
    counter = 0

    def next_id() -> str:
        nonlocal counter
        eid = f"{failure_id}-e{counter:04d}"
        counter += 1
        return eid

    root_entity = str(rng.choice(topo.services))
    root = Event(next_id(), template.root_event_type, root_entity, base_time)
    events = [root]
    parents: dict[str, str] = {}
    raws = [RawRecord(RawSource.METRIC, root.entity, root.timestamp,
                      _raw_payload(root.event_type, rng))]

    frontier = [root]
    while frontier:
        trigger = frontier.pop(0)
        for rule in template.rules:
            if rule.trigger_type != trigger.event_type:
                continue
            if rule.probability < 1.0 and rng.random() >= rule.probability:
                continue
            delay = int(rng.integers(rule.delay_ms[0], rule.delay_ms[1] + 1))
            nbrs = topo.out_neighbors(trigger.entity)
            entity = str(rng.choice(nbrs)) if nbrs else trigger.entity
            produced = Event(next_id(), rule.produced_type, entity,
                             trigger.timestamp + delay)
            parents[produced.event_id] = trigger.event_id
            events.append(produced)
            raws.append(RawRecord(RawSource.METRIC, entity, produced.timestamp,
                                  _raw_payload(produced.event_type, rng)))
            frontier.append(produced)

    alarm = max(events[1:], key=Event.sort_key)
    span_ms = alarm.timestamp - base_time + 3000
    n_noise = int(rng.poisson(template.noise_rate * span_ms / 60_000.0))
    for _ in range(n_noise):
        ntype = str(rng.choice(NOISE_TYPES))
        entity = str(rng.choice(topo.services))
        ts = base_time + int(rng.integers(0, span_ms + 1))
        noise = Event(next_id(), ntype, entity, ts)
        events.append(noise)
        raws.append(RawRecord(RawSource.METRIC, entity, ts,
                              _raw_payload(ntype, rng)))

    seq = EventSequence(events=events, failure_id=failure_id,
                        fault_class=template.class_id,
                        alarm_event_id=alarm.event_id)
    return GeneratedCase(
        sequence=seq,
        root_event_id=root.event_id,
        propagation_path=template.trunk_path(),
        parents=parents,
        raw_records=sorted(raws, key=lambda r: (r.timestamp, r.payload)),
    )


def write_dataset(cases: list[GeneratedCase], topo: Topology, out_dir: str | Path) -> None:
    """Write events.jsonl, raw_events.jsonl, ground_truth.json, topology.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_events([c.sequence for c in cases], out / "events.jsonl")
    with (out / "raw_events.jsonl").open("w", encoding="utf-8") as fh:
        for case in cases:
            for r in case.raw_records:
                fh.write(json.dumps({
                    "failure_id": case.sequence.failure_id,
                    "source": r.source.value,
                    "entity": r.entity,
                    "timestamp_ms": r.timestamp,
                    "payload": r.payload,
                }, sort_keys=True) + "\n")
    truth = {
        c.sequence.failure_id: {
            "fault_class": c.sequence.fault_class,
            "root_event_id": c.root_event_id,
            "alarm_event_id": c.sequence.alarm_event_id,
            "propagation_path": c.propagation_path,
            "parents": c.parents,
        }
        for c in cases
    }
    (out / "ground_truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "topology.json").write_text(
        json.dumps({"services": list(topo.services),
                    "edges": [list(e) for e in topo.edges]},
                   indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_topology(path: str | Path) -> Topology:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Topology(services=tuple(doc["services"]),
                    edges=tuple((a, b) for a, b in doc["edges"]))


def load_ground_truth(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
