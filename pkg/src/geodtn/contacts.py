"""Encounter detection, one-connection-per-slot arbitration and bandwidth-limited transfers."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np


class Mode(str, Enum):
    REPLICATE = "replicate"
    FORWARD = "forward"
    DELIVER = "deliver"


@dataclass(frozen=True)
class Contact:
    node_a: int
    node_b: int
    started_at: float
    link_rate: float  # bits per second


@dataclass(frozen=True)
class TransferAction:
    """One message transfer inside a contact.

    ``tickets`` is what the receiver's copy carries. For a replicate the sender
    keeps ``tickets_before - tickets`` unless ``extra`` is set, in which case a
    fresh one-ticket copy is minted and the sender's count is untouched.
    ``threshold_time``/``threshold_dist`` are the lowered thresholds to apply on
    completion (``None`` leaves them alone).
    """

    message_id: int
    sender: int
    receiver: int
    mode: Mode
    size: int
    tickets: int = 1
    threshold_time: float | None = None
    threshold_dist: float | None = None
    extra: bool = False

    def __post_init__(self):
        if self.tickets < 1:
            raise ValueError("a transferred copy carries at least one ticket")

    @property
    def key(self) -> tuple:
        return (self.message_id, self.sender, self.receiver, self.mode)


@lru_cache(maxsize=32)
def _pair_index(n: int):
    return np.triu_indices(n, k=1)


def detect_contacts(positions, range_: float) -> list[tuple[int, int]]:
    """All index pairs ``(i, j)``, ``i < j``, at Euclidean distance <= ``range_``."""
    xy = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(xy)
    if n < 2:
        return []
    ii, jj = _pair_index(n)
    x, y = xy[:, 0], xy[:, 1]
    dx = x[ii] - x[jj]
    dy = y[ii] - y[jj]
    hit = np.flatnonzero(dx * dx + dy * dy <= range_ * range_)
    if hit.size == 0:
        return []
    return list(zip(ii[hit].tolist(), jj[hit].tolist()))


def arbitrate_slots(pairs, rng: random.Random) -> list[tuple[int, int]]:
    """Random greedy matching: shuffle the pairs, keep each whose endpoints are both still free."""
    order = sorted(pairs)
    rng.shuffle(order)
    busy: set = set()
    matched = []
    for a, b in order:
        if a in busy or b in busy:
            continue
        busy.add(a)
        busy.add(b)
        matched.append((a, b))
    matched.sort()
    return matched


def slot_budget(link_rate: float, slot_duration: float) -> float:
    """Bytes a link moves in one slot."""
    return link_rate * slot_duration / 8.0


def execute_transfers(contact: Contact, actions, slot_duration: float, progress: float = 0.0):
    """Run ``actions`` in order against one slot's byte budget.

    ``progress`` is the number of bytes of ``actions[0]`` already sent in
    earlier slots. Returns ``(completed, pending)`` where ``pending`` is
    ``(action, bytes_sent)`` for the first action that ran out of budget, or
    ``None``. Nothing after a pending action is attempted, and a pending action
    has no effect until a later slot finishes it.
    """
    budget = slot_budget(contact.link_rate, slot_duration)
    completed = []
    for k, action in enumerate(actions):
        need = action.size - (progress if k == 0 else 0.0)
        if need <= budget:
            budget -= need
            completed.append(action)
            continue
        sent = (progress if k == 0 else 0.0) + budget
        return completed, (action, sent)
    return completed, None
