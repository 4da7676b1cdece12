"""Node trajectories: Random WayPoint on an open plane and POI-interest walks on a map graph.

Every model draws from the ``random.Random`` it is handed, so a trajectory is
a pure function of that generator's seed and the model parameters.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .geometry import Position, Velocity, distance

MOVING = "moving"
WAITING = "waiting"

STILL = Velocity(0.0, 0.0)

STRAIGHT, TURNED, ARRIVED = 0, 1, 2


class MobilityError(ValueError):
    pass


class UnreachableWaypoint(MobilityError):
    pass


class NoFeasibleCoordinate(MobilityError):
    pass


class MapFormatError(MobilityError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(slots=True)
class MobilityState:
    position: Position
    velocity: Velocity = STILL
    mode: str = WAITING
    wait_remaining: float = 0.0
    current_waypoint: Position | None = None
    speed: float = 0.0
    # remaining points to visit, last one is current_waypoint
    path: list = field(default_factory=list)
    # map vertex the node sits on (None while between vertices or off-map)
    vertex: int | None = None
    # map vertex the current leg ends at
    target: int | None = None
    # endpoints of the edge an off-vertex node starts on
    edge_ends: tuple = ()
    # distance left to path[0]
    seg_left: float = 0.0


def _advance(state: MobilityState, dt: float) -> int:
    """Move along ``state.path`` for ``dt`` seconds.

    Returns ``ARRIVED`` once the last point is reached, ``TURNED`` if a path
    vertex was passed (heading changed) and ``STRAIGHT`` otherwise.
    """
    budget = state.speed * dt
    if state.seg_left > budget:
        # common case: stay on the current segment at constant velocity
        x, y = state.position
        vx, vy = state.velocity
        state.position = Position(x + vx * dt, y + vy * dt)
        state.seg_left -= budget
        return STRAIGHT
    x, y = state.path.pop(0)
    budget -= state.seg_left
    path = state.path
    while path:
        tx, ty = path[0]
        gap = math.hypot(tx - x, ty - y)
        if gap > budget:
            f = budget / gap
            state.position = Position(x + (tx - x) * f, y + (ty - y) * f)
            state.seg_left = gap - budget
            return TURNED
        budget -= gap
        x, y = tx, ty
        path.pop(0)
    state.position = Position(x, y)
    state.seg_left = 0.0
    return ARRIVED


def _heading(state: MobilityState) -> Velocity:
    if not state.path or state.speed == 0.0:
        return STILL
    tx, ty = state.path[0]
    x, y = state.position
    gap = math.hypot(tx - x, ty - y)
    if gap == 0.0:
        return STILL
    return Velocity((tx - x) / gap * state.speed, (ty - y) / gap * state.speed)


def _start_leg(state: MobilityState, path: list, speed: float) -> None:
    x, y = state.position
    while path and path[0][0] == x and path[0][1] == y:
        path.pop(0)
    state.path = path
    state.current_waypoint = Position(*path[-1]) if path else state.position
    state.speed = speed
    state.mode = MOVING
    state.wait_remaining = 0.0
    state.velocity = _heading(state)
    if state.velocity == STILL:
        # zero-length leg: nothing to travel, treat as waiting for this step
        state.mode = WAITING
        state.speed = 0.0
        state.path = []
        state.seg_left = 0.0
    else:
        state.seg_left = math.hypot(path[0][0] - x, path[0][1] - y)


def _draw_wait(wait_range, rng: random.Random) -> float:
    lo, hi = wait_range
    return rng.uniform(lo, hi) if hi > 0 else 0.0


# ---------------------------------------------------------------- RWP


def _pick_rwp(state: MobilityState, bounds, speed_range, rng: random.Random) -> None:
    w, h = bounds
    target = Position(rng.uniform(0.0, w), rng.uniform(0.0, h))
    _start_leg(state, [target], rng.uniform(*speed_range))


def rwp_initial(bounds, speed_range, rng: random.Random) -> MobilityState:
    w, h = bounds
    state = MobilityState(Position(rng.uniform(0.0, w), rng.uniform(0.0, h)))
    _pick_rwp(state, bounds, speed_range, rng)
    return state


def rwp_step(state: MobilityState, dt: float, bounds, speed_range, wait_range, rng: random.Random) -> MobilityState:
    """Advance one Random WayPoint node by ``dt`` seconds (mutates and returns ``state``)."""
    if dt <= 0:
        raise MobilityError("dt must be positive")
    if state.mode == WAITING:
        state.wait_remaining -= dt
        if state.wait_remaining > 1e-9:
            return state
        _pick_rwp(state, bounds, speed_range, rng)
        if state.mode == WAITING:
            return state
    moved = _advance(state, dt)
    if moved == ARRIVED:
        pause = _draw_wait(wait_range, rng)
        if pause > 0.0:
            state.mode = WAITING
            state.wait_remaining = pause
            state.velocity = STILL
            state.speed = 0.0
            state.path = []
        else:
            _pick_rwp(state, bounds, speed_range, rng)
    elif moved == TURNED:
        state.velocity = _heading(state)
    return state


@dataclass(frozen=True)
class RwpModel:
    bounds: tuple[float, float]
    speed_range: tuple[float, float]
    wait_range: tuple[float, float] = (0.0, 0.0)

    def initial(self, rng: random.Random) -> MobilityState:
        return rwp_initial(self.bounds, self.speed_range, rng)

    def step(self, state: MobilityState, dt: float, rng: random.Random) -> MobilityState:
        return rwp_step(state, dt, self.bounds, self.speed_range, self.wait_range, rng)


# ---------------------------------------------------------------- map graph


class MapGraph:
    """Undirected road graph: coordinates joined by straight path segments.

    ``pois`` maps a group id to the coordinate indices of that group's points
    of interest. All-pairs shortest paths are computed once at construction.
    """

    def __init__(self, coordinates: Sequence, edges: Sequence, pois: dict[int, Sequence[int]] | None = None,
                 check_connected: bool = True):
        self.coordinates = [Position(float(x), float(y)) for x, y in coordinates]
        n = len(self.coordinates)
        if n == 0:
            raise MobilityError("map has no coordinates")
        seen = set()
        clean = []
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise MobilityError(f"edge ({i}, {j}) references a missing coordinate")
            if distance(self.coordinates[i], self.coordinates[j]) <= 0.0:
                raise MobilityError(f"edge ({i}, {j}) has zero length")
            key = (min(i, j), max(i, j))
            if key not in seen:
                seen.add(key)
                clean.append(key)
        self.edges = clean
        self.pois = {int(g): tuple(int(i) for i in idx) for g, idx in (pois or {}).items()}
        for g, idx in self.pois.items():
            if not idx:
                raise MobilityError(f"POI group {g} is empty")
            for i in idx:
                if not 0 <= i < n:
                    raise MobilityError(f"POI {i} of group {g} references a missing coordinate")

        rows = [i for i, j in clean] + [j for i, j in clean]
        cols = [j for i, j in clean] + [i for i, j in clean]
        weights = [distance(self.coordinates[i], self.coordinates[j]) for i, j in clean] * 2
        graph = coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
        self.components = connected_components(graph, directed=False)[0]
        if check_connected and self.components != 1:
            raise UnreachableWaypoint(f"map is disconnected ({self.components} components)")
        self.dist, self._pred = shortest_path(graph, directed=False, return_predecessors=True)
        self._xy = np.array(self.coordinates)
        self._edge_len = np.array([distance(self.coordinates[i], self.coordinates[j]) for i, j in clean])
        self._edge_cum = np.cumsum(self._edge_len)

    def __len__(self) -> int:
        return len(self.coordinates)

    @property
    def all_pois(self) -> list[int]:
        return sorted({i for idx in self.pois.values() for i in idx})

    @property
    def extent(self) -> tuple[float, float, float, float]:
        xs, ys = self._xy[:, 0], self._xy[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def path(self, src: int, dst: int) -> list[int]:
        """Vertex indices from ``src`` (exclusive) to ``dst`` (inclusive) along a shortest path."""
        if src == dst:
            return []
        if math.isinf(self.dist[src, dst]):
            raise UnreachableWaypoint(f"coordinate {dst} unreachable from {src}")
        out = []
        v = dst
        pred = self._pred[src]
        while v != src:
            out.append(v)
            v = int(pred[v])
        out.reverse()
        return out

    def nearest(self, point) -> int:
        d = np.hypot(self._xy[:, 0] - point[0], self._xy[:, 1] - point[1])
        return int(np.argmin(d))

    def random_point_on_edge(self, rng: random.Random) -> tuple[Position, int, int]:
        r = rng.uniform(0.0, float(self._edge_cum[-1]))
        k = int(np.searchsorted(self._edge_cum, r, side="right"))
        k = min(k, len(self.edges) - 1)
        i, j = self.edges[k]
        u = rng.random()
        a, b = self.coordinates[i], self.coordinates[j]
        return Position(a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u), i, j

    # ------------------------------------------------------------ file format

    def dumps(self) -> str:
        lines = [f"V {c.x!r} {c.y!r}" for c in self.coordinates]
        lines += [f"E {i} {j}" for i, j in self.edges]
        for g in sorted(self.pois):
            lines += [f"P {g} {i}" for i in self.pois[g]]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "MapGraph":
        coords, edges, pois = [], [], {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            try:
                if tag == "V" and len(args) == 2:
                    coords.append((float(args[0]), float(args[1])))
                elif tag == "E" and len(args) == 2:
                    i, j = int(args[0]), int(args[1])
                    if not (0 <= i < len(coords) and 0 <= j < len(coords)):
                        raise MapFormatError(f"edge ({i}, {j}) has a dangling index", lineno)
                    edges.append((i, j))
                elif tag == "P" and len(args) == 2:
                    g, i = int(args[0]), int(args[1])
                    if not 0 <= i < len(coords):
                        raise MapFormatError(f"POI {i} has a dangling index", lineno)
                    pois.setdefault(g, []).append(i)
                else:
                    raise MapFormatError(f"cannot parse {raw.strip()!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, MapFormatError):
                    raise
                raise MapFormatError(f"bad number in {raw.strip()!r}", lineno) from exc
        try:
            return cls(coords, edges, pois)
        except MapFormatError:
            raise
        except MobilityError as exc:
            raise MapFormatError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "MapGraph":
        return cls.loads(Path(path).read_text())


def grid_map(cols: int, rows: int, spacing: float, pois_per_area: int = 10) -> MapGraph:
    """Rectangular street grid with four disjoint POI clusters, one per quadrant."""
    if cols < 2 or rows < 2:
        raise MobilityError("grid needs at least 2x2 coordinates")
    coords = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    w, h = (cols - 1) * spacing, (rows - 1) * spacing
    centres = [(w / 4, h / 4), (3 * w / 4, h / 4), (w / 4, 3 * h / 4), (3 * w / 4, 3 * h / 4)]
    xy = np.array(coords)
    pois = {}
    taken: set[int] = set()
    for g, (cx, cy) in enumerate(centres):
        quadrant = [k for k, (x, y) in enumerate(coords)
                    if (x < w / 2) == (cx < w / 2) and (y < h / 2) == (cy < h / 2)]
        d = np.hypot(xy[quadrant, 0] - cx, xy[quadrant, 1] - cy)
        order = sorted(range(len(quadrant)), key=lambda t: (d[t], quadrant[t]))
        chosen = [quadrant[t] for t in order[:pois_per_area]]
        if len(chosen) < pois_per_area or taken.intersection(chosen):
            raise MobilityError("grid too small for disjoint POI areas")
        taken.update(chosen)
        pois[g] = sorted(chosen)
    return MapGraph(coords, edges, pois)


# ---------------------------------------------------------------- POI walk


@dataclass(frozen=True)
class PoiProfile:
    group_id: int
    poi_coordinates: tuple[int, ...]
    interest: float

    def __post_init__(self):
        if not 0.0 <= self.interest <= 1.0:
            raise MobilityError(f"interest {self.interest} outside [0, 1]")
        if not self.poi_coordinates:
            raise MobilityError("POI profile needs at least one coordinate")


def draw_waypoint(map_: MapGraph, profile: PoiProfile, rng: random.Random) -> int:
    """Next target coordinate: a POI with probability ``interest``, else any coordinate."""
    if rng.random() < profile.interest:
        return profile.poi_coordinates[rng.randrange(len(profile.poi_coordinates))]
    return rng.randrange(len(map_))


def _leave_from(state: MobilityState, map_: MapGraph, target: int) -> list[int]:
    """Route to ``target``; an off-vertex node first heads to the better end of its edge."""
    if state.vertex is not None:
        return map_.path(state.vertex, target)
    best = None
    for end in state.edge_ends:
        if math.isinf(map_.dist[end, target]):
            continue
        cost = distance(state.position, map_.coordinates[end]) + map_.dist[end, target]
        if best is None or cost < best[0]:
            best = (cost, end)
    if best is None:
        raise UnreachableWaypoint(f"coordinate {target} unreachable from {state.position}")
    return [best[1]] + map_.path(best[1], target)


def _pick_poi(state: MobilityState, map_: MapGraph, profile: PoiProfile, speed_range, rng: random.Random) -> None:
    target = draw_waypoint(map_, profile, rng)
    speed = rng.uniform(*speed_range)
    route = _leave_from(state, map_, target)
    state.target = target
    _start_leg(state, [map_.coordinates[v] for v in route], speed)
    if state.mode == MOVING:
        state.vertex = None
        state.edge_ends = ()


def poi_initial(map_: MapGraph, profile: PoiProfile, speed_range, rng: random.Random) -> MobilityState:
    """Place a node uniformly along the map's edges and start its first leg."""
    pos, i, j = map_.random_point_on_edge(rng)
    state = MobilityState(pos)
    if pos == map_.coordinates[i]:
        state.vertex = i
    elif pos == map_.coordinates[j]:
        state.vertex = j
    else:
        state.edge_ends = (i, j)
    _pick_poi(state, map_, profile, speed_range, rng)
    return state


def poi_step(state: MobilityState, dt: float, map_: MapGraph, profile: PoiProfile, speed_range, wait_range,
             rng: random.Random) -> MobilityState:
    """Advance one POI-interest node by ``dt`` seconds along shortest map paths."""
    if dt <= 0:
        raise MobilityError("dt must be positive")
    if state.mode == WAITING:
        state.wait_remaining -= dt
        if state.wait_remaining > 1e-9:
            return state
        _pick_poi(state, map_, profile, speed_range, rng)
        if state.mode == WAITING:
            return state
    moved = _advance(state, dt)
    if moved == ARRIVED:
        state.vertex = state.target
        pause = _draw_wait(wait_range, rng)
        if pause > 0.0:
            state.mode = WAITING
            state.wait_remaining = pause
            state.velocity = STILL
            state.speed = 0.0
            state.path = []
        else:
            _pick_poi(state, map_, profile, speed_range, rng)
    elif moved == TURNED:
        state.velocity = _heading(state)
    return state


def place_destinations(map_: MapGraph, count: int, variation: float, rng: random.Random) -> list[Position]:
    """Pick ``count`` distinct POIs and place a destination near each.

    With ``variation > 0`` the destination is the map coordinate closest to a
    point ``variation`` metres from the POI in a random direction, restricted to
    coordinates strictly farther than ``variation`` from that POI.
    """
    pois = map_.all_pois
    if count > len(pois):
        raise MobilityError(f"{count} destinations requested but the map has {len(pois)} POIs")
    if variation < 0:
        raise MobilityError("variation must be non-negative")
    chosen = rng.sample(pois, count)
    xy = map_._xy
    out = []
    for p in chosen:
        poi = map_.coordinates[p]
        if variation == 0:
            out.append(poi)
            continue
        from_poi = np.hypot(xy[:, 0] - poi.x, xy[:, 1] - poi.y)
        feasible = np.flatnonzero(from_poi > variation)
        if feasible.size == 0:
            raise NoFeasibleCoordinate(f"no coordinate lies more than {variation} m from POI {p}")
        theta = rng.uniform(0.0, 2.0 * math.pi)
        gx, gy = poi.x + variation * math.cos(theta), poi.y + variation * math.sin(theta)
        d = np.hypot(xy[feasible, 0] - gx, xy[feasible, 1] - gy)
        out.append(map_.coordinates[int(feasible[int(np.argmin(d))])])
    return out


@dataclass(frozen=True)
class PoiModel:
    map: MapGraph
    profile: PoiProfile
    speed_range: tuple[float, float]
    wait_range: tuple[float, float] = (0.0, 0.0)

    def initial(self, rng: random.Random) -> MobilityState:
        return poi_initial(self.map, self.profile, self.speed_range, rng)

    def step(self, state: MobilityState, dt: float, rng: random.Random) -> MobilityState:
        return poi_step(state, dt, self.map, self.profile, self.speed_range, self.wait_range, rng)


class Fleet:
    """Steps many nodes at once.

    Nodes cruising along a segment move in one vectorised update and paused
    nodes count down together; a node that reaches a vertex, arrives or ends
    its pause goes through its model's own ``step``, so trajectories are
    identical to stepping each state alone.
    """

    def __init__(self, models: Sequence, rngs: Sequence[random.Random]):
        self.models = list(models)
        self.rngs = list(rngs)
        self.states = [m.initial(r) for m, r in zip(self.models, self.rngs)]
        n = len(self.states)
        self.positions = np.zeros((n, 2))
        self.velocities = np.zeros((n, 2))
        self.speeds = np.zeros(n)
        self.seg_left = np.zeros(n)
        self.moving = np.zeros(n, dtype=bool)
        self.wait_left = np.zeros(n)
        for i in range(n):
            self._pull(i)

    def __len__(self) -> int:
        return len(self.states)

    def _pull(self, i: int) -> None:
        st = self.states[i]
        self.positions[i] = st.position
        self.velocities[i] = st.velocity
        self.speeds[i] = st.speed
        self.seg_left[i] = st.seg_left
        self.moving[i] = st.mode == MOVING
        self.wait_left[i] = st.wait_remaining if st.mode == WAITING else 0.0

    def step(self, dt: float) -> None:
        if not self.states:
            return
        budget = self.speeds * dt
        fast = self.moving & (self.seg_left > budget)
        self.positions[fast] += self.velocities[fast] * dt
        self.seg_left[fast] -= budget[fast]
        # same arithmetic as the per-node countdown: subtract, then compare
        after = self.wait_left - dt
        paused = ~self.moving & (after > 1e-9)
        self.wait_left[paused] = after[paused]
        for i in np.flatnonzero(~(fast | paused)).tolist():
            self.models[i].step(self.state(i), dt, self.rngs[i])
            self._pull(i)

    def state(self, i: int) -> MobilityState:
        """Up-to-date state of node ``i``."""
        st = self.states[i]
        st.position = Position(float(self.positions[i, 0]), float(self.positions[i, 1]))
        st.seg_left = float(self.seg_left[i])
        if st.mode == WAITING:
            st.wait_remaining = float(self.wait_left[i])
        return st
