"""Message copies, copy tickets, cached relay thresholds, buffers and ACK ledgers.

An unset threshold is stored as ``math.inf``: every comparison the routing
conditions make ("initialised with an infinitely large value") then works
without special cases, and ``min`` merges thresholds directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

UNSET = math.inf


class MessageError(ValueError):
    pass


class NotSplittable(MessageError):
    pass


class MismatchedMessage(MessageError):
    pass


class Expired(MessageError):
    pass


@dataclass(slots=True)
class MessageCopy:
    id: int
    source: int
    destination: int
    size: int
    created_at: float
    ttl_initial: float
    tickets: int
    threshold_time: float = UNSET
    threshold_dist: float = UNSET
    hop_trace: tuple[int, ...] = ()

    def __post_init__(self):
        if self.tickets < 1:
            raise MessageError(f"copy of message {self.id} needs at least one ticket")

    @property
    def expires_at(self) -> float:
        return self.created_at + self.ttl_initial

    def lower_threshold_time(self, value: float) -> None:
        if value < self.threshold_time:
            self.threshold_time = value

    def lower_threshold_dist(self, value: float) -> None:
        if value < self.threshold_dist:
            self.threshold_dist = value

    def spawn(self, tickets: int, holder: int) -> "MessageCopy":
        """A new copy for ``holder`` carrying ``tickets`` and the current thresholds."""
        return replace(self, tickets=tickets, hop_trace=self.hop_trace + (holder,))


def split_tickets(tickets: int) -> tuple[int, int]:
    """Binary split of a copy ticket count into ``(give, keep)``, keep >= give."""
    if tickets <= 1:
        raise NotSplittable(f"{tickets} ticket(s) cannot be split")
    give = tickets // 2
    return give, tickets - give


def remaining_ttl(copy: MessageCopy, now: float) -> float:
    return max(0.0, copy.ttl_initial - (now - copy.created_at))


def sync_thresholds(a: MessageCopy, b: MessageCopy) -> tuple[MessageCopy, MessageCopy]:
    """Both copies adopt the smaller of each cached threshold (in place)."""
    if a.id != b.id:
        raise MismatchedMessage(f"cannot sync message {a.id} with message {b.id}")
    t = min(a.threshold_time, b.threshold_time)
    d = min(a.threshold_dist, b.threshold_dist)
    a.threshold_time = b.threshold_time = t
    a.threshold_dist = b.threshold_dist = d
    return a, b


def delivery_chance(rem: float, threshold_time: float) -> float:
    if math.isinf(threshold_time):
        return 0.0
    return min(1.0, max(0.0, (rem - threshold_time) / rem))


def message_utility(copy: MessageCopy, now: float) -> float:
    """Delivery potential of a copy within its remaining lifetime.

    ``1 - (1 - p) ** tickets`` where ``p`` is the clamped share of the
    remaining TTL left over once the best known intersect time is spent.
    """
    rem = remaining_ttl(copy, now)
    if rem <= 0.0:
        raise Expired(f"message {copy.id} expired at {copy.expires_at}")
    p = delivery_chance(rem, copy.threshold_time)
    return 1.0 - (1.0 - p) ** copy.tickets


def _utility_or_zero(copy: MessageCopy, now: float) -> float:
    try:
        return message_utility(copy, now)
    except Expired:
        return 0.0


EVICT_OLDEST = "oldest"
EVICT_UTILITY = "utility"


class Buffer:
    """Per-node message store, at most one copy per message id."""

    __slots__ = ("copies", "capacity", "used")

    def __init__(self, capacity: float = math.inf):
        if capacity <= 0:
            raise MessageError("buffer capacity must be positive")
        self.copies: dict[int, MessageCopy] = {}
        self.capacity = capacity
        self.used = 0

    def __contains__(self, msg_id: int) -> bool:
        return msg_id in self.copies

    def __len__(self) -> int:
        return len(self.copies)

    def __iter__(self):
        return iter(self.copies.values())

    def get(self, msg_id: int) -> MessageCopy | None:
        return self.copies.get(msg_id)

    def free(self) -> float:
        return self.capacity - self.used

    def add(self, copy: MessageCopy) -> None:
        if copy.id in self.copies:
            raise MessageError(f"buffer already holds message {copy.id}")
        if self.used + copy.size > self.capacity:
            raise MessageError(f"no room for message {copy.id} ({copy.size} bytes)")
        self.copies[copy.id] = copy
        self.used += copy.size

    def remove(self, msg_id: int) -> MessageCopy:
        copy = self.copies.pop(msg_id)
        self.used -= copy.size
        return copy


def eviction_order(buffer: Buffer, now: float, policy: str = EVICT_OLDEST) -> list[MessageCopy]:
    """Copies in the order they would be dropped."""
    if policy == EVICT_UTILITY:
        key = lambda c: (_utility_or_zero(c, now), c.created_at, c.id)
    elif policy == EVICT_OLDEST:
        key = lambda c: (c.created_at, c.id)
    else:
        raise ValueError(f"unknown eviction policy {policy!r}")
    return sorted(buffer.copies.values(), key=key)


def evict_for(buffer: Buffer, incoming_size: int, now: float, policy: str = EVICT_OLDEST) -> list[int]:
    """Drop copies until ``incoming_size`` bytes fit; returns evicted ids in drop order."""
    if incoming_size > buffer.capacity:
        raise MessageError(f"{incoming_size} bytes exceed buffer capacity {buffer.capacity}")
    if buffer.used + incoming_size <= buffer.capacity:
        return []
    evicted = []
    for copy in eviction_order(buffer, now, policy):
        buffer.remove(copy.id)
        evicted.append(copy.id)
        if buffer.used + incoming_size <= buffer.capacity:
            break
    return evicted


@dataclass
class AckLedger:
    delivered_ids: set[int] = field(default_factory=set)

    def __contains__(self, msg_id: int) -> bool:
        return msg_id in self.delivered_ids

    def __len__(self) -> int:
        return len(self.delivered_ids)

    def record(self, msg_id: int) -> None:
        self.delivered_ids.add(msg_id)

    def merge(self, other: "AckLedger | Iterable[int]") -> None:
        ids = other.delivered_ids if isinstance(other, AckLedger) else other
        self.delivered_ids.update(ids)


def apply_acks(buffer: Buffer, ledger: AckLedger) -> list[int]:
    """Drop every buffered copy the ledger reports as delivered."""
    if not ledger.delivered_ids or not buffer.copies:
        return []
    dropped = [mid for mid in buffer.copies if mid in ledger.delivered_ids]
    for mid in dropped:
        buffer.remove(mid)
    return dropped
