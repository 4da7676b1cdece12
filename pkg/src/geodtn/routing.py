"""Per-encounter relay policies.

Every scheme answers one question for an encounter between a carrier and a
peer: which of the carrier's copies go across, in what order, and with what
ticket split and threshold updates. Policies are pure: node state arrives as
immutable snapshots and the result is a list of :class:`TransferAction`.

Schemes:

``dd``      direct delivery only
``s-saw``   source spray-and-wait (one ticket per relay)
``b-saw``   binary spray-and-wait (half the tickets per relay)
``s-abgr``  carrier-vs-peer intersect-time comparison, one ticket per relay
``s-tbgr``  cached intersect-time threshold, one ticket per relay
``b-tbgr``  cached threshold, binary split
``tbgr``    ``b-tbgr`` plus local-maximum replication near the TTL
``tbhgr``   two-phase heterogeneity-aware relay with projected distances,
            visiting-preference checks and utility-ordered transmission
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .contacts import Mode, TransferAction
from .geometry import Position, Velocity, intersect_time, projected_distance, relative_angle
from .messages import MessageCopy, _utility_or_zero, remaining_ttl, split_tickets

HALF_PI = math.pi / 2


class Scheme(str, Enum):
    DD = "dd"
    S_SAW = "s-saw"
    B_SAW = "b-saw"
    S_ABGR = "s-abgr"
    S_TBGR = "s-tbgr"
    B_TBGR = "b-tbgr"
    TBGR = "tbgr"
    TBHGR = "tbhgr"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {name!r} (expected one of {valid})") from None

    @property
    def uses_thresholds(self) -> bool:
        return self in (Scheme.S_TBGR, Scheme.B_TBGR, Scheme.TBGR, Scheme.TBHGR)


@dataclass(frozen=True)
class NodeView:
    """What an encounter partner can see of a node at slot start."""

    id: int
    position: Position
    velocity: Velocity = Velocity(0.0, 0.0)
    encountered: frozenset = frozenset()  # destinations met so far
    holds: frozenset = frozenset()  # buffered message ids
    acked: frozenset = frozenset()  # message ids known delivered

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])


@dataclass(frozen=True)
class EncounterContext:
    carrier: NodeView
    peer: NodeView
    destinations: Mapping[int, Position]
    now: float
    range: float
    window: float = 5.0


def heading_angle(node: NodeView, dest) -> float | None:
    """Relative angle to ``dest``; None for a stationary node, 0 on top of it."""
    if node.speed == 0.0:
        return None
    if node.position[0] == dest[0] and node.position[1] == dest[1]:
        return 0.0
    return relative_angle(node.position, node.velocity, dest)


def relay_time(node: NodeView, dest, range_: float) -> float | None:
    """Intersect time of ``node`` towards ``dest``, or None where it is undefined.

    A node already inside the destination's range scores 0.
    """
    if node.speed == 0.0:
        return None
    dist = math.hypot(dest[0] - node.position[0], dest[1] - node.position[1])
    if dist <= range_:
        return 0.0
    phi = relative_angle(node.position, node.velocity, dest)
    if phi >= HALF_PI:
        return None
    return intersect_time(dist, range_, node.speed, phi)


def _heads_towards(node: NodeView, dest, range_: float) -> bool:
    dist = math.hypot(dest[0] - node.position[0], dest[1] - node.position[1])
    if dist <= range_:
        return True
    phi = heading_angle(node, dest)
    return phi is not None and phi < HALF_PI


def peer_projected_distance(ctx: EncounterContext, copy: MessageCopy) -> float:
    dest = ctx.destinations[copy.destination]
    peer = ctx.peer
    dist = math.hypot(dest[0] - peer.position[0], dest[1] - peer.position[1])
    phi = heading_angle(peer, dest)
    if phi is None:
        phi = HALF_PI
    return projected_distance(dist, ctx.window, peer.speed, phi, ctx.range)


# ---------------------------------------------------------------- conditions


def cond_abgr(ctx: EncounterContext, copy: MessageCopy) -> bool:
    """Peer beats the carrier's own intersect time; both moving and heading in."""
    dest = ctx.destinations[copy.destination]
    t_carrier = relay_time(ctx.carrier, dest, ctx.range)
    t_peer = relay_time(ctx.peer, dest, ctx.range)
    if t_carrier is None or t_peer is None:
        return False
    return t_carrier > t_peer


def cond_tbgr_relay(ctx: EncounterContext, copy: MessageCopy) -> bool:
    """Peer beats the best intersect time cached in the message."""
    t_peer = relay_time(ctx.peer, ctx.destinations[copy.destination], ctx.range)
    return t_peer is not None and copy.threshold_time > t_peer


def cond_local_max(copy: MessageCopy, now: float) -> bool:
    """Best recorded intersect time already exceeds what is left of the TTL."""
    if math.isinf(copy.threshold_time):
        return False
    return copy.threshold_time > remaining_ttl(copy, now)


# ---------------------------------------------------------------- actions


def _replicate(ctx, copy, tickets, **kw) -> TransferAction:
    return TransferAction(copy.id, ctx.carrier.id, ctx.peer.id, Mode.REPLICATE, copy.size, tickets, **kw)


def _peer_time(ctx, copy) -> float:
    return relay_time(ctx.peer, ctx.destinations[copy.destination], ctx.range)


def tbhgr_phase1(ctx: EncounterContext, copy: MessageCopy) -> TransferAction | None:
    """Relay a multi-ticket copy towards the destination's area."""
    if copy.tickets <= 1 or ctx.peer.speed == 0.0:
        return None
    give, _ = split_tickets(copy.tickets)
    dest = ctx.destinations[copy.destination]
    visited = copy.destination in ctx.peer.encountered
    if visited and cond_tbgr_relay(ctx, copy):
        return _replicate(ctx, copy, give, threshold_time=_peer_time(ctx, copy))
    towards = _heads_towards(ctx.peer, dest, ctx.range)
    if towards and cond_local_max(copy, ctx.now):
        return _replicate(ctx, copy, give)
    if not towards:
        projected = peer_projected_distance(ctx, copy)
        if copy.threshold_dist > projected:
            return _replicate(ctx, copy, 1, threshold_dist=projected)
    return None


def tbhgr_phase2(ctx: EncounterContext, copy: MessageCopy) -> TransferAction | None:
    """Hand a single-ticket copy on to a peer that has visited the destination."""
    if copy.tickets != 1 or ctx.peer.speed == 0.0:
        return None
    if copy.destination not in ctx.peer.encountered:
        return None
    if cond_tbgr_relay(ctx, copy):
        return TransferAction(copy.id, ctx.carrier.id, ctx.peer.id, Mode.FORWARD, copy.size, 1,
                              threshold_time=_peer_time(ctx, copy))
    # a peer moving away never gets a single-ticket copy
    towards = _heads_towards(ctx.peer, ctx.destinations[copy.destination], ctx.range)
    if towards and cond_local_max(copy, ctx.now):
        return _replicate(ctx, copy, 1, extra=True)
    return None


def relay_action(scheme: Scheme, ctx: EncounterContext, copy: MessageCopy) -> TransferAction | None:
    """Relay decision for one copy the peer does not hold (peer is not its destination)."""
    tickets = copy.tickets
    if scheme is Scheme.DD:
        return None
    if scheme is Scheme.TBHGR:
        if tickets > 1:
            return tbhgr_phase1(ctx, copy)
        return tbhgr_phase2(ctx, copy)
    if tickets <= 1:
        return None
    if scheme is Scheme.S_SAW:
        return _replicate(ctx, copy, 1)
    if scheme is Scheme.B_SAW:
        return _replicate(ctx, copy, split_tickets(tickets)[0])
    if scheme is Scheme.S_ABGR:
        return _replicate(ctx, copy, 1) if cond_abgr(ctx, copy) else None
    if ctx.peer.speed == 0.0:
        return None
    give = 1 if scheme is Scheme.S_TBGR else split_tickets(tickets)[0]
    if cond_tbgr_relay(ctx, copy):
        return _replicate(ctx, copy, give, threshold_time=_peer_time(ctx, copy))
    if scheme is Scheme.TBGR and cond_local_max(copy, ctx.now):
        return _replicate(ctx, copy, give)
    return None


def transmission_order(scheme: Scheme, carried: Iterable[MessageCopy], now: float) -> list[MessageCopy]:
    """TBHGR sends the highest-utility copy first; every other scheme is FIFO."""
    if Scheme.parse(scheme) is Scheme.TBHGR:
        return sorted(carried, key=lambda c: (-_utility_or_zero(c, now), c.created_at, c.id))
    return sorted(carried, key=lambda c: (c.created_at, c.id))


def decide(scheme, ctx: EncounterContext, carried: Iterable[MessageCopy]) -> list[TransferAction]:
    """Ordered transfers from ``ctx.carrier`` to ``ctx.peer``.

    Deliveries to a peer that is the destination come first. Copies the peer
    already holds produce nothing here; the engine syncs their thresholds.
    """
    scheme = Scheme.parse(scheme)
    carrier, peer = ctx.carrier, ctx.peer
    peer_is_destination = peer.id in ctx.destinations
    deliveries: list[TransferAction] = []
    relays: list[TransferAction] = []
    for copy in transmission_order(scheme, carried, ctx.now):
        if copy.created_at + copy.ttl_initial <= ctx.now or copy.id in carrier.acked:
            continue
        if copy.destination == peer.id:
            if copy.id not in peer.acked:
                deliveries.append(TransferAction(copy.id, carrier.id, peer.id, Mode.DELIVER, copy.size, copy.tickets))
            continue
        if peer_is_destination or copy.id in peer.holds or copy.id in peer.acked:
            continue
        action = relay_action(scheme, ctx, copy)
        if action is not None:
            relays.append(action)
    return deliveries + relays
