"""Type co-occurrence statistics over sliding time windows.

Counts, per failure sequence, every time-ordered event pair whose gap is at
most window_seconds; the counts back the correlation score used by the graph
builder and the PMI feature used by the relation classifier. Probabilities
live in the pair space: p(a,b) is the pair count over all counted pairs, and
marginals are row/column sums of the pair table.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .events import EventSequence

logger = logging.getLogger(__name__)


@dataclass
class HistoricalStats:
    type_pair_counts: dict[tuple[str, str], int]
    type_counts: dict[str, int]
    window_seconds: float
    src_counts: dict[str, int] = field(init=False)
    dst_counts: dict[str, int] = field(init=False)
    total_pairs: int = field(init=False)

    def __post_init__(self):
        self.src_counts = {}
        self.dst_counts = {}
        self.total_pairs = 0
        for (a, b), n in self.type_pair_counts.items():
            if n < 0:
                raise ValueError(f"negative pair count for ({a!r}, {b!r})")
            self.src_counts[a] = self.src_counts.get(a, 0) + n
            self.dst_counts[b] = self.dst_counts.get(b, 0) + n
            self.total_pairs += n


def build_stats(
    histories: list[EventSequence], window_seconds: float
) -> HistoricalStats:
    """Count time-ordered type pairs with gap <= window_seconds per sequence.

    Equal-timestamp pairs are counted in (timestamp, event_id) order, the
    same total order the graph builder iterates in.
    """
    if not histories:
        logger.warning("build_stats called with no histories; all-zero stats")
    window_ms = window_seconds * 1000.0
    pair_counts: dict[tuple[str, str], int] = {}
    type_counts: dict[str, int] = {}
    for seq in histories:
        events = seq.events
        for e in events:
            type_counts[e.event_type] = type_counts.get(e.event_type, 0) + 1
        for i in range(len(events)):
            for j in range(i + 1, len(events)):
                if events[j].timestamp - events[i].timestamp > window_ms:
                    break
                key = (events[i].event_type, events[j].event_type)
                pair_counts[key] = pair_counts.get(key, 0) + 1
    return HistoricalStats(pair_counts, type_counts, window_seconds)


def _pair_probs(a_type: str, b_type: str, stats: HistoricalStats):
    n_ab = stats.type_pair_counts.get((a_type, b_type), 0)
    if n_ab == 0 or stats.total_pairs == 0:
        return None
    total = stats.total_pairs
    p_ab = n_ab / total
    p_a = stats.src_counts.get(a_type, 0) / total
    p_b = stats.dst_counts.get(b_type, 0) / total
    if p_a == 0.0 or p_b == 0.0:
        return None
    return p_ab, p_a, p_b


def pmi(a_type: str, b_type: str, stats: HistoricalStats) -> float:
    """Pointwise mutual information of the ordered pair; 0.0 when unseen."""
    probs = _pair_probs(a_type, b_type, stats)
    if probs is None:
        return 0.0
    p_ab, p_a, p_b = probs
    return math.log(p_ab / (p_a * p_b))


def correlation(a_type: str, b_type: str, stats: HistoricalStats) -> float:
    """Normalized PMI mapped to [0, 1].

    1.0 means a and b always and only co-occur (npmi limit at p(a,b)=1
    included); 0.5 is independence; 0.0 means never observed together.
    """
    probs = _pair_probs(a_type, b_type, stats)
    if probs is None:
        return 0.0
    p_ab, p_a, p_b = probs
    if p_ab >= 1.0:
        return 1.0
    npmi = math.log(p_ab / (p_a * p_b)) / (-math.log(p_ab))
    return min(1.0, max(0.0, (npmi + 1.0) / 2.0))
