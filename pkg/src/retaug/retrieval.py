"""Per-class catalog retrieval with adaptive over-fetch and filtering.

Each class is served by querying progressively larger neighbor lists until
enough records survive the aesthetics/NSFW filters and the shared duplicate
gate. Fetch sizes double per round from 1.4x the per-class target up to a
hard cap of 10x that starting size.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from .catalog import CatalogIndex, CatalogRecord
from .dedup import BKTree
from .errors import ConfigError

# absorbs float noise in products that are mathematically integral
_CEIL_EPS = 1e-9


def _int_ceil(x: float) -> int:
    return math.ceil(x - _CEIL_EPS)


@dataclass(frozen=True)
class RetrievalPolicy:
    target_per_class: int = 130
    overfetch_factor: float = 1.4
    max_multiplier: int = 10
    aesthetics_min: float = 5.0
    exclude_nsfw: bool = True

    def __post_init__(self):
        if self.target_per_class < 1:
            raise ConfigError(f"target_per_class must be >= 1, got {self.target_per_class}")
        if self.overfetch_factor < 1:
            raise ConfigError(f"overfetch_factor must be >= 1, got {self.overfetch_factor}")
        if self.max_multiplier < 1:
            raise ConfigError(f"max_multiplier must be >= 1, got {self.max_multiplier}")


class RejectReason(str, Enum):
    NSFW = "nsfw"
    LOW_AESTHETICS = "low-aesthetics"
    DUPLICATE = "duplicate"


class RetrievalStatus(str, Enum):
    COMPLETE = "complete"
    INSUFFICIENT = "insufficient"


@dataclass(frozen=True)
class AcceptedRecord:
    record_id: int
    similarity: float
    fetch_round: int


@dataclass(frozen=True)
class ClassRetrievalResult:
    class_wnid: str
    accepted: tuple[AcceptedRecord, ...]
    status: RetrievalStatus
    fetch_rounds: int


def plan_fetch_sizes(policy: RetrievalPolicy) -> list[int]:
    """Strictly increasing fetch schedule: start at ceil(factor * target),
    double each round, final entry clamped to ceil(max_multiplier * factor * target)."""
    start = _int_ceil(policy.overfetch_factor * policy.target_per_class)
    cap = _int_ceil(policy.max_multiplier * policy.overfetch_factor * policy.target_per_class)
    sizes = []
    size = start
    while size < cap:
        sizes.append(size)
        size *= 2
    sizes.append(cap)
    return sizes


def filter_record(record: CatalogRecord, policy: RetrievalPolicy) -> Optional[RejectReason]:
    """None means accept. NSFW dominates; aesthetics below the minimum is
    rejected (strictly below: the boundary value passes)."""
    if policy.exclude_nsfw and record.nsfw_flag:
        return RejectReason.NSFW
    if record.aesthetics_score < policy.aesthetics_min:
        return RejectReason.LOW_AESTHETICS
    return None


class DedupChecker:
    """Shared accept-gate across concurrent per-class retrievals.

    Claims are exact-URL matches plus, when a perceptual hash is known for the
    record, a Hamming-radius check against already claimed hashes. Membership
    updates serialize on an internal lock.
    """

    def __init__(self, hashes: Mapping[int, int] | None = None, radius: int = 10):
        self._lock = threading.Lock()
        self._urls: set[str] = set()
        self._hashes = dict(hashes) if hashes else {}
        self._tree = BKTree()
        self._radius = radius

    def try_claim(self, record: CatalogRecord) -> bool:
        """Claim the record; False if its URL or near-identical hash was taken."""
        with self._lock:
            if record.url in self._urls:
                return False
            h = self._hashes.get(record.record_id)
            if h is not None and self._tree.any_within(h, self._radius):
                return False
            self._urls.add(record.url)
            if h is not None:
                self._tree.add(h, record.record_id)
            return True


def retrieve_class(
    index: CatalogIndex,
    query,
    policy: RetrievalPolicy,
    dedup: DedupChecker,
    class_wnid: str,
) -> ClassRetrievalResult:
    """Fill one class up to policy.target_per_class accepted records.

    Rounds follow plan_fetch_sizes; each round consumes only neighbors beyond
    the previous round's rank prefix. Acceptance stops the moment the target
    is reached, so the result is exactly the target-most-similar acceptable
    records and no surplus record claims dedup membership. If the capped final
    round still falls short the result keeps what was found, flagged
    Insufficient.
    """
    target = policy.target_per_class
    accepted: list[AcceptedRecord] = []
    consumed = 0
    rounds = 0
    for size in plan_fetch_sizes(policy):
        rounds += 1
        neighbors = index.query(query, size)
        fresh = neighbors[consumed:]
        consumed = len(neighbors)
        for nb in fresh:
            record = index.record(nb.record_id)
            if filter_record(record, policy) is not None:
                continue
            if not dedup.try_claim(record):
                continue
            accepted.append(AcceptedRecord(nb.record_id, nb.similarity, rounds))
            if len(accepted) == target:
                return ClassRetrievalResult(
                    class_wnid, tuple(accepted), RetrievalStatus.COMPLETE, rounds
                )
    return ClassRetrievalResult(class_wnid, tuple(accepted), RetrievalStatus.INSUFFICIENT, rounds)


def select_most_similar(pool, m: int) -> list:
    """Top-m of a (record_id, similarity) pool, ties by ascending record_id.

    Accepts tuples or any objects with record_id/similarity attributes;
    m beyond the pool size returns the whole pool ranked.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")

    def _key(item):
        if hasattr(item, "record_id"):
            return (-item.similarity, item.record_id)
        rid, sim = item[0], item[1]
        return (-sim, rid)

    return sorted(pool, key=_key)[:m]
