"""Time-stepped simulation loop.

One step is one MAC slot. Within a step effects happen in a fixed order:
mobility, expiry sweep, contact detection, slot arbitration, encounter-set and
ACK updates, then deliveries and relays inside each matched pair, and finally
message generation.

Randomness comes from independent named streams derived from the seed, so two
schemes run with the same seed see identical node trajectories and traffic.
"""

from __future__ import annotations

import heapq
import io
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import ConfigError, ScenarioConfig
from .contacts import Contact, Mode, TransferAction, arbitrate_slots, detect_contacts, execute_transfers
from .geometry import Position, Velocity
from .messages import EVICT_OLDEST, EVICT_UTILITY, AckLedger, Buffer, MessageCopy, evict_for, sync_thresholds
from .mobility import Fleet, MapGraph, PoiModel, PoiProfile, RwpModel, grid_map, place_destinations
from .routing import EncounterContext, NodeView, Scheme, decide

CREATED = "created"
REPLICATED = "replicated"
FORWARDED = "forwarded"
DELIVERED = "delivered"
EXPIRED = "expired"
EVICTED = "evicted"
ACKED = "acked"

# event kinds that take a copy (and its tickets) out of the network
REMOVALS = (DELIVERED, EXPIRED, EVICTED, ACKED)


class InvariantViolation(AssertionError):
    pass


class Event(NamedTuple):
    time: float
    kind: str
    message: int
    node: int  # source / sender / holder
    peer: int  # destination / receiver, -1 if none
    tickets: int
    extra: bool = False


class EventLog:
    """Append-only record of every copy-level event."""

    HEADER = "time,kind,message,node,peer,tickets,extra"

    def __init__(self, events=None):
        self.events: list[Event] = list(events or [])
        self.counts: Counter = Counter(e.kind for e in self.events)
        self.extra_copies = sum(1 for e in self.events if e.extra)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def append(self, event: Event) -> None:
        if self.events and event.time < self.events[-1].time:
            raise InvariantViolation("event log timestamps must not decrease")
        self.events.append(event)
        self.counts[event.kind] += 1
        if event.extra:
            self.extra_copies += 1

    def live_copies(self) -> int:
        """Copies in the network according to the log alone."""
        c = self.counts
        return c[CREATED] + c[REPLICATED] - c[DELIVERED] - c[EXPIRED] - c[EVICTED] - c[ACKED]

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(self.HEADER + "\n")
        for e in self.events:
            buf.write(f"{e.time!r},{e.kind},{e.message},{e.node},{e.peer},{e.tickets},{int(e.extra)}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        lines = text.strip().splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise ValueError("not an event log")
        events = []
        for line in lines[1:]:
            t, kind, msg, node, peer, tickets, extra = line.split(",")
            events.append(Event(float(t), kind, int(msg), int(node), int(peer), int(tickets), extra == "1"))
        return cls(events)


@dataclass
class Node:
    id: int
    buffer: Buffer
    is_destination: bool = False
    ledger: AckLedger = field(default_factory=AckLedger)
    encountered: set = field(default_factory=set)


def stream(seed: int, name: str) -> random.Random:
    """Independent, reproducible RNG stream for one purpose within a run."""
    return random.Random(f"{seed}/{name}")


def build_world(cfg: ScenarioConfig):
    """Mobility models for each mobile node plus destination positions."""
    if cfg.mobility == "rwp":
        model = RwpModel((cfg.area_width, cfg.area_height), (cfg.speed_min, cfg.speed_max),
                         (cfg.wait_min, cfg.wait_max))
        models = [model] * cfg.node_count
        dests = [Position(*p) for p in cfg.destinations] or [Position(cfg.area_width / 2, cfg.area_height / 2)]
        return models, dests, None
    if cfg.map == "grid":
        map_ = grid_map(cfg.grid_cols, cfg.grid_rows, cfg.grid_spacing, cfg.pois_per_area)
    else:
        map_ = MapGraph.load(cfg.map)
    if not map_.pois:
        raise ConfigError("poi mobility needs a map with POI groups")
    groups = sorted(map_.pois)
    profiles = [PoiProfile(g, map_.pois[g], cfg.interest) for g in groups]
    models = [PoiModel(map_, profiles[i % len(profiles)], (cfg.speed_min, cfg.speed_max),
                       (cfg.wait_min, cfg.wait_max)) for i in range(cfg.node_count)]
    dests = place_destinations(map_, cfg.destination_count, cfg.destination_variation, stream(cfg.seed, "placement"))
    return models, dests, map_


class Simulation:
    """Mutable simulation state for one (config, seed) run."""

    def __init__(self, cfg: ScenarioConfig, check_invariants: bool = False):
        self.cfg = cfg
        self.scheme = cfg.scheme_id
        self.check_invariants = check_invariants
        self.acks = cfg.acks_enabled
        self.evict_policy = EVICT_UTILITY if self.scheme is Scheme.TBHGR else EVICT_OLDEST
        self.dt = cfg.slot_duration
        self.now = 0.0
        self.log = EventLog()

        models, dests, self.map = build_world(cfg)
        self.fleet = Fleet(models, [stream(cfg.seed, f"mobility/{i}") for i in range(len(models))])
        self.nodes: list[Node] = [Node(i, Buffer(cfg.buffer_capacity)) for i in range(len(models))]
        self.mobile_ids = list(range(len(models)))
        self.destination_positions: dict[int, Position] = {}
        for k, pos in enumerate(dests):
            nid = len(models) + k
            self.nodes.append(Node(nid, Buffer(math.inf), is_destination=True))
            self.destination_positions[nid] = pos
        self.destination_ids = sorted(self.destination_positions)
        self.positions = np.zeros((len(self.nodes), 2))
        self.positions[:len(models)] = self.fleet.positions
        self.positions[len(models):] = np.array(dests, dtype=float).reshape(-1, 2)

        self.mac_rng = stream(cfg.seed, "mac")
        self.traffic_rng = stream(cfg.seed, "traffic")
        self.next_message = 0
        self.next_generation = cfg.warmup
        self.expiry_heap: list[tuple[float, int]] = []
        self.holders: dict[int, set[int]] = defaultdict(set)
        self.sessions: dict[tuple[int, int], tuple[tuple, float]] = {}
        self.contact_start: dict[tuple[int, int], float] = {}
        self.first_delivery: dict[int, float] = {}
        self.created_at: dict[int, float] = {}
        # per-message ticket totals, accumulated from emitted events only
        self.minted: Counter = Counter()
        self.removed: Counter = Counter()

    # ------------------------------------------------------------ helpers

    def _emit(self, kind, msg, node, peer=-1, tickets=0, extra=False):
        self.log.append(Event(self.now, kind, msg, node, peer, tickets, extra))
        if kind == CREATED:
            self.minted[msg] += tickets
        elif extra:
            self.minted[msg] += 1
        elif kind in REMOVALS:
            self.removed[msg] += tickets

    def _drop(self, node: Node, msg_id: int, kind: str, peer: int = -1) -> None:
        copy = node.buffer.remove(msg_id)
        self.holders[msg_id].discard(node.id)
        self._emit(kind, msg_id, node.id, peer, copy.tickets)

    def _store(self, node: Node, copy: MessageCopy) -> None:
        buf = node.buffer
        if buf.used + copy.size > buf.capacity:
            tickets = {mid: c.tickets for mid, c in buf.copies.items()}
            for victim in evict_for(buf, copy.size, self.now, self.evict_policy):
                self.holders[victim].discard(node.id)
                self._emit(EVICTED, victim, node.id, -1, tickets[victim])
        node.buffer.add(copy)
        self.holders[copy.id].add(node.id)

    def position(self, nid: int) -> Position:
        return Position(float(self.positions[nid, 0]), float(self.positions[nid, 1]))

    def velocity(self, nid: int) -> Velocity:
        if nid >= len(self.fleet):
            return Velocity(0.0, 0.0)
        v = self.fleet.velocities[nid]
        return Velocity(float(v[0]), float(v[1]))

    def _view(self, node: Node) -> NodeView:
        return NodeView(node.id, self.position(node.id), self.velocity(node.id), frozenset(node.encountered),
                        frozenset(node.buffer.copies), frozenset(node.ledger.delivered_ids))

    # ------------------------------------------------------------ step phases

    def _move(self) -> None:
        if len(self.fleet):
            self.fleet.step(self.dt)
            self.positions[:len(self.fleet)] = self.fleet.positions

    def _expire(self) -> None:
        heap = self.expiry_heap
        while heap and heap[0][0] <= self.now:
            _, msg = heapq.heappop(heap)
            for nid in sorted(self.holders.get(msg, ())):
                self._drop(self.nodes[nid], msg, EXPIRED)

    def _contacts(self) -> list[tuple[int, int]]:
        pairs = detect_contacts(self.positions, self.cfg.range)
        n_mobile = len(self.mobile_ids)
        return [(a, b) for a, b in pairs if a < n_mobile]  # two destinations never talk

    def _encounter_updates(self, pairs) -> None:
        n_mobile = len(self.mobile_ids)
        for a, b in pairs:
            na, nb = self.nodes[a], self.nodes[b]
            if b >= n_mobile:
                na.encountered.add(b)
            if self.acks and (na.ledger.delivered_ids != nb.ledger.delivered_ids):
                na.ledger.merge(nb.ledger)
                nb.ledger.merge(na.ledger)
                for node in (na, nb):
                    if node.is_destination:
                        continue
                    for mid in [m for m in node.buffer.copies if m in node.ledger]:
                        self._drop(node, mid, ACKED)

    def _sync_shared(self, na: Node, nb: Node) -> None:
        small, big = (na, nb) if len(na.buffer) <= len(nb.buffer) else (nb, na)
        for mid, copy in small.buffer.copies.items():
            other = big.buffer.copies.get(mid)
            if other is not None:
                sync_thresholds(copy, other)

    def _still_valid(self, action: TransferAction) -> MessageCopy | None:
        sender = self.nodes[action.sender]
        copy = sender.buffer.get(action.message_id)
        if copy is None or copy.expires_at <= self.now:
            return None
        receiver = self.nodes[action.receiver]
        if action.mode is Mode.DELIVER:
            return None if action.message_id in receiver.ledger else copy
        if action.message_id in receiver.buffer:
            return None
        if action.mode is Mode.REPLICATE and not action.extra and copy.tickets <= action.tickets:
            return None
        if action.mode is Mode.FORWARD and copy.tickets != 1:
            return None
        return copy

    def _apply(self, action: TransferAction) -> bool:
        copy = self._still_valid(action)
        if copy is None:
            return False
        sender, receiver = self.nodes[action.sender], self.nodes[action.receiver]
        mid = action.message_id
        if action.mode is Mode.DELIVER:
            receiver.ledger.record(mid)
            if mid not in self.first_delivery:
                self.first_delivery[mid] = self.now
            self._drop(sender, mid, DELIVERED, receiver.id)
            return True
        if action.threshold_time is not None:
            copy.lower_threshold_time(action.threshold_time)
        if action.threshold_dist is not None:
            copy.lower_threshold_dist(action.threshold_dist)
        fresh = copy.spawn(action.tickets, receiver.id)
        if action.mode is Mode.FORWARD:
            sender.buffer.remove(mid)
            self.holders[mid].discard(sender.id)
            self._emit(FORWARDED, mid, sender.id, receiver.id, action.tickets)
        else:
            if not action.extra:
                copy.tickets -= action.tickets
            self._emit(REPLICATED, mid, sender.id, receiver.id, action.tickets, action.extra)
        self._store(receiver, fresh)
        return True

    def _exchange(self, a: int, b: int) -> None:
        na, nb = self.nodes[a], self.nodes[b]
        if self.scheme.uses_thresholds and not nb.is_destination:
            self._sync_shared(na, nb)
        va, vb = self._view(na), self._view(nb)
        ctx = EncounterContext(va, vb, self.destination_positions, self.now, self.cfg.range, self.cfg.window)
        actions = decide(self.scheme, ctx, na.buffer)
        if not nb.is_destination:
            back = EncounterContext(vb, va, self.destination_positions, self.now, self.cfg.range, self.cfg.window)
            actions += decide(self.scheme, back, nb.buffer)
        progress = 0.0
        session = self.sessions.pop((a, b), None)
        if session is not None:
            key, sent = session
            for k, act in enumerate(actions):
                if act.key == key:
                    actions.insert(0, actions.pop(k))
                    progress = sent
                    break
        if not actions:
            return
        contact = Contact(a, b, self.contact_start.get((a, b), self.now), self.cfg.bandwidth)
        completed, pending = execute_transfers(contact, actions, self.dt, progress)
        for act in completed:
            self._apply(act)
        if pending is not None:
            self.sessions[(a, b)] = (pending[0].key, pending[1])

    def _generate(self) -> None:
        cfg = self.cfg
        while self.next_generation <= self.now and self.next_generation < cfg.generation_end:
            self.next_generation += cfg.generation_interval
            if not self.mobile_ids or not self.destination_ids:
                continue
            sources = self.mobile_ids if cfg.generation_per_node else [self.traffic_rng.choice(self.mobile_ids)]
            for src in sources:
                dst = self.traffic_rng.choice(self.destination_ids)
                mid = self.next_message
                self.next_message += 1
                copy = MessageCopy(mid, src, dst, cfg.message_size, self.now, cfg.ttl, cfg.copies,
                                   hop_trace=(src,))
                self.created_at[mid] = self.now
                self._emit(CREATED, mid, src, dst, cfg.copies)
                self._store(self.nodes[src], copy)
                heapq.heappush(self.expiry_heap, (copy.expires_at, mid))

    # ------------------------------------------------------------ public

    def step(self) -> None:
        self.now = round(self.now + self.dt, 9)
        self._move()
        self._expire()
        pairs = self._contacts()
        live = set(pairs)
        for key in [k for k in self.contact_start if k not in live]:
            del self.contact_start[key]
            self.sessions.pop(key, None)
        for key in pairs:
            self.contact_start.setdefault(key, self.now)
        matched = arbitrate_slots(pairs, self.mac_rng)
        self._encounter_updates(pairs)
        for a, b in matched:
            self._exchange(a, b)
        self._generate()
        if self.check_invariants:
            self.verify()

    def run(self) -> "RunResult":
        from .metrics import compute_metrics

        if self.now == 0.0:
            self._generate()
        steps = int(math.ceil(self.cfg.horizon / self.dt - 1e-9))
        while self.now < self.cfg.horizon - 1e-9 and steps > 0:
            self.step()
            steps -= 1
        return RunResult(self.cfg, self.log, compute_metrics(self.log, self.cfg.scheme, self.cfg.seed))

    # ------------------------------------------------------------ invariants

    def verify(self) -> None:
        """Census checks: live copies and per-message tickets against the event log."""
        live_copies = 0
        live_tickets: Counter = Counter()
        live_count: Counter = Counter()
        for node in self.nodes:
            for copy in node.buffer:
                live_copies += 1
                live_tickets[copy.id] += copy.tickets
                live_count[copy.id] += 1
        if live_copies != self.log.live_copies():
            raise InvariantViolation(f"t={self.now}: {live_copies} live copies, log says {self.log.live_copies()}")
        for mid in set(self.minted) | set(live_tickets):
            if live_tickets[mid] + self.removed[mid] != self.minted[mid]:
                raise InvariantViolation(
                    f"t={self.now}: message {mid} tickets live={live_tickets[mid]} removed={self.removed[mid]} "
                    f"minted={self.minted[mid]}")
            if live_count[mid] > self.minted[mid]:
                raise InvariantViolation(f"t={self.now}: message {mid} has more copies than tickets minted")
        for node in self.nodes:
            if node.buffer.used > node.buffer.capacity:
                raise InvariantViolation(f"t={self.now}: node {node.id} buffer over capacity")


@dataclass
class RunResult:
    config: ScenarioConfig
    log: EventLog
    metrics: object


def run(cfg: ScenarioConfig, check_invariants: bool = False) -> RunResult:
    """Simulate ``cfg`` from warm-up through the drain phase."""
    return Simulation(cfg, check_invariants).run()
