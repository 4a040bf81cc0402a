"""Events, abstract event types, and the event file format.

An :class:`Event` is a timestamped occurrence of an :class:`EventType` on a
service/pod/node. Raw telemetry records become events through an ordered
template catalog (first matching rule wins). Failures are exchanged on disk
as line-delimited JSON, one record per event:

    {"failure_id": "F0001", "event_id": "F0001-e0003", "event_type": "CPU_OVERLOAD",
     "entity": "svc-07", "timestamp_ms": 171000, "attributes": {"value": "0.97"},
     "fault_class": "cpu_overload", "is_alarm": false}

``fault_class`` and ``is_alarm`` are optional; at most one record per failure
may set ``is_alarm``. Files are UTF-8.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateEventId, NoMatchingTemplate, ParseError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EventType:
    """Abstract template class of an event, e.g. ``CPU_OVERLOAD``."""

    id: str
    description: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValueError("EventType.id must be non-empty")


@dataclass
class Event:
    event_id: str
    event_type: str
    entity: str
    timestamp: int  # milliseconds since epoch
    attributes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp on event {self.event_id!r}")

    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.event_id)


@dataclass
class EventSequence:
    """Time-ordered events of one failure case.

    Events are kept sorted by (timestamp, event_id); the constructor sorts
    and rejects duplicate event ids.
    """

    events: list[Event]
    failure_id: str
    fault_class: str | None = None
    alarm_event_id: str | None = None

    def __post_init__(self):
        self.events = sorted(self.events, key=Event.sort_key)
        seen: set[str] = set()
        for e in self.events:
            if e.event_id in seen:
                raise DuplicateEventId(
                    f"event id {e.event_id!r} repeated in failure {self.failure_id!r}")
            seen.add(e.event_id)

    def __len__(self) -> int:
        return len(self.events)

    def type_sequence(self) -> list[str]:
        return [e.event_type for e in self.events]


class RawSource(enum.Enum):
    METRIC = "metric"
    LOG = "log"
    ACTIVITY = "activity"


@dataclass
class RawRecord:
    source: RawSource
    entity: str
    timestamp: int
    payload: str

    def __post_init__(self):
        if isinstance(self.source, str):
            self.source = RawSource(self.source)
        if not self.payload:
            raise ValueError("RawRecord.payload must be non-empty")


@dataclass(frozen=True)
class TemplateRule:
    """One abstraction rule: regex over the payload, optional source filter.

    Named groups of the pattern become event attributes.
    """

    pattern: str
    event_type: str
    source: RawSource | None = None

    def matches(self, raw: RawRecord) -> re.Match | None:
        if self.source is not None and raw.source != self.source:
            return None
        return re.search(self.pattern, raw.payload)


def _raw_event_id(raw: RawRecord) -> str:
    digest = hashlib.sha1(
        f"{raw.source.value}|{raw.entity}|{raw.timestamp}|{raw.payload}".encode()
    ).hexdigest()
    return f"raw-{digest[:12]}"


def abstract_event(raw: RawRecord, catalog: list[TemplateRule]) -> Event:
    """Convert one raw record into a structured event via the first matching rule."""
    if not catalog:
        raise ValueError("template catalog is empty")
    for rule in catalog:
        m = rule.matches(raw)
        if m is not None:
            attributes = {k: v for k, v in m.groupdict().items() if v is not None}
            return Event(
                event_id=_raw_event_id(raw),
                event_type=rule.event_type,
                entity=raw.entity,
                timestamp=raw.timestamp,
                attributes=attributes,
            )
    raise NoMatchingTemplate(f"no template matches payload {raw.payload!r}")


def abstract_events(
    raws: list[RawRecord], catalog: list[TemplateRule], strict: bool = False
) -> tuple[list[Event], int]:
    """Batch conversion. Unmatched records are dropped (counted) unless strict."""
    events: list[Event] = []
    dropped = 0
    for raw in raws:
        try:
            events.append(abstract_event(raw, catalog))
        except NoMatchingTemplate:
            if strict:
                raise
            dropped += 1
    if dropped:
        logger.warning("dropped %d raw records with no matching template", dropped)
    return events, dropped


_REQUIRED_FIELDS = ("failure_id", "event_id", "event_type", "entity", "timestamp_ms")


def load_events(path: str | Path) -> list[EventSequence]:
    """Load line-delimited event records, grouped by failure and sorted.

    Raises ParseError (with the offending line number) on malformed records
    and DuplicateEventId when an id repeats within a failure.
    """
    path = Path(path)
    grouped: dict[str, list[Event]] = {}
    classes: dict[str, str | None] = {}
    alarms: dict[str, str | None] = {}
    ids_seen: dict[str, set[str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            for f in _REQUIRED_FIELDS:
                if f not in rec:
                    raise ParseError(f"missing field {f!r}", line=lineno)
            fid = rec["failure_id"]
            eid = rec["event_id"]
            if eid in ids_seen.setdefault(fid, set()):
                raise DuplicateEventId(
                    f"line {lineno}: event id {eid!r} repeated in failure {fid!r}")
            ids_seen[fid].add(eid)
            try:
                event = Event(
                    event_id=eid,
                    event_type=rec["event_type"],
                    entity=rec["entity"],
                    timestamp=int(rec["timestamp_ms"]),
                    attributes=dict(rec.get("attributes") or {}),
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
            grouped.setdefault(fid, []).append(event)
            if rec.get("fault_class") is not None:
                prev = classes.get(fid)
                if prev is not None and prev != rec["fault_class"]:
                    raise ParseError(
                        f"conflicting fault_class for failure {fid!r}", line=lineno)
                classes[fid] = rec["fault_class"]
            if rec.get("is_alarm"):
                if alarms.get(fid) is not None:
                    raise ParseError(
                        f"multiple alarm events in failure {fid!r}", line=lineno)
                alarms[fid] = eid
    return [
        EventSequence(
            events=grouped[fid],
            failure_id=fid,
            fault_class=classes.get(fid),
            alarm_event_id=alarms.get(fid),
        )
        for fid in sorted(grouped)
    ]


def save_events(sequences: list[EventSequence], path: str | Path) -> None:
    """Inverse of load_events (round-trips the in-memory representation)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for seq in sorted(sequences, key=lambda s: s.failure_id):
            for e in seq.events:
                rec = {
                    "failure_id": seq.failure_id,
                    "event_id": e.event_id,
                    "event_type": e.event_type,
                    "entity": e.entity,
                    "timestamp_ms": e.timestamp,
                    "attributes": e.attributes,
                }
                if seq.fault_class is not None:
                    rec["fault_class"] = seq.fault_class
                if seq.alarm_event_id == e.event_id:
                    rec["is_alarm"] = True
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
