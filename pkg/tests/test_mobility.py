import math
import random

import pytest

from geodtn.geometry import Position, Velocity
from geodtn.mobility import (MOVING, WAITING, Fleet, MapFormatError, MapGraph, MobilityError, MobilityState,
                             NoFeasibleCoordinate, PoiModel, PoiProfile, RwpModel, UnreachableWaypoint, _start_leg,
                             draw_waypoint, grid_map, place_destinations, poi_initial, poi_step, rwp_initial, rwp_step)

BOUNDS = (1000.0, 1000.0)


def moving_state(pos, target, speed):
    st = MobilityState(Position(*pos))
    _start_leg(st, [Position(*target)], speed)
    return st


def test_rwp_step_kinematics():
    st = moving_state((0, 0), (100, 0), 5.0)
    rwp_step(st, 1.0, BOUNDS, (5, 5), (0, 0), random.Random(0))
    assert st.position == (5.0, 0.0)
    assert st.current_waypoint == (100.0, 0.0)
    assert st.velocity == (5.0, 0.0) and st.mode == MOVING


def test_rwp_zero_wait_never_lingers():
    rng = random.Random(1)
    st = rwp_initial(BOUNDS, (5, 5), rng)
    for _ in range(3000):
        rwp_step(st, 1.0, BOUNDS, (5, 5), (0, 0), rng)
        assert st.mode == MOVING
        assert st.velocity.speed == pytest.approx(5.0)


def test_rwp_waits_within_range_then_moves():
    rng = random.Random(2)
    st = moving_state((0, 0), (3, 0), 5.0)
    rwp_step(st, 1.0, BOUNDS, (5, 5), (10, 20), rng)
    assert st.mode == WAITING and st.velocity == (0.0, 0.0) and st.position == (3.0, 0.0)
    assert 10 <= st.wait_remaining <= 20
    steps = 0
    while st.mode == WAITING:
        rwp_step(st, 1.0, BOUNDS, (5, 5), (10, 20), rng)
        steps += 1
    assert 10 <= steps <= 21


def test_rwp_same_seed_same_trajectory():
    def trace(seed):
        rng = random.Random(seed)
        st = rwp_initial(BOUNDS, (1, 10), rng)
        out = []
        for _ in range(500):
            rwp_step(st, 1.0, BOUNDS, (1, 10), (0, 30), rng)
            out.append(st.position)
        return out

    assert trace(5) == trace(5)
    assert trace(5) != trace(6)


def test_rwp_stays_in_bounds_with_speed_in_range():
    rng = random.Random(3)
    st = rwp_initial((300.0, 200.0), (2, 9), rng)
    for _ in range(5000):
        rwp_step(st, 1.0, (300.0, 200.0), (2, 9), (0, 5), rng)
        assert 0 <= st.position.x <= 300 and 0 <= st.position.y <= 200
        if st.mode == MOVING:
            assert 2 - 1e-9 <= st.velocity.speed <= 9 + 1e-9


def test_step_rejects_nonpositive_dt():
    st = moving_state((0, 0), (1, 0), 1.0)
    with pytest.raises(MobilityError):
        rwp_step(st, 0.0, BOUNDS, (1, 1), (0, 0), random.Random(0))


@pytest.mark.parametrize("dt", [1.0, 0.7])
def test_fleet_matches_individual_stepping(dt):
    model = RwpModel(BOUNDS, (1.0, 8.0), (0.0, 30.0))
    gm = grid_map(5, 4, 100.0, 3)
    prof = PoiProfile(0, gm.pois[0], 0.7)
    pmodel = PoiModel(gm, prof, (2.0, 9.0), (0.0, 20.0))
    models = [model, pmodel, model, pmodel]
    fleet = Fleet(models, [random.Random(k) for k in range(4)])
    solo = []
    for k, m in enumerate(models):
        rng = random.Random(k)
        solo.append((m, m.initial(rng), rng))
    for _ in range(2000):
        fleet.step(dt)
        for i, (m, st, rng) in enumerate(solo):
            m.step(st, dt, rng)
            assert tuple(fleet.positions[i]) == tuple(st.position)
            assert tuple(fleet.velocities[i]) == tuple(st.velocity)
    for i, (_, st, _) in enumerate(solo):
        assert fleet.state(i).position == st.position
        assert fleet.state(i).wait_remaining == st.wait_remaining


# ---------------------------------------------------------------- maps


def line_map():
    return MapGraph([(0, 0), (100, 0), (200, 0), (200, 50)], [(0, 1), (1, 2), (2, 3)], {0: [3], 1: [0]})


def test_map_shortest_path():
    m = line_map()
    assert m.path(0, 3) == [1, 2, 3]
    assert m.path(2, 2) == []
    assert m.dist[0, 3] == 250.0


def test_map_validation():
    with pytest.raises(MobilityError):
        MapGraph([(0, 0), (1, 0)], [(0, 2)])
    with pytest.raises(MobilityError):
        MapGraph([(0, 0), (0, 0)], [(0, 1)])
    with pytest.raises(UnreachableWaypoint):
        MapGraph([(0, 0), (1, 0), (5, 5)], [(0, 1)])
    m = MapGraph([(0, 0), (1, 0), (5, 5)], [(0, 1)], check_connected=False)
    with pytest.raises(UnreachableWaypoint):
        m.path(0, 2)


def test_map_file_round_trip(tmp_path):
    m = line_map()
    path = tmp_path / "line.map"
    m.save(path)
    back = MapGraph.load(path)
    assert back.coordinates == m.coordinates
    assert back.pois == m.pois
    assert back.dumps() == m.dumps()


def test_map_file_parsing_and_errors():
    text = "# tiny map\nV 0 0\nV 10 0\n\nE 0 1  # road\nP 2 1\n"
    m = MapGraph.loads(text)
    assert len(m) == 2 and m.pois == {2: (1,)}
    with pytest.raises(MapFormatError) as exc:
        MapGraph.loads("V 0 0\nV 1 0\nE 0 5\n")
    assert exc.value.line == 3
    with pytest.raises(MapFormatError) as exc:
        MapGraph.loads("V 0 0\nX 1 2\n")
    assert exc.value.line == 2
    with pytest.raises(MapFormatError):
        MapGraph.loads("V 0 0\nV 1 0\nE 0 1\nP 0 9\n")


def test_grid_map_has_four_disjoint_poi_areas():
    m = grid_map(12, 9, 250.0, 10)
    assert len(m) == 108
    assert sorted(m.pois) == [0, 1, 2, 3]
    sets = [set(v) for v in m.pois.values()]
    assert all(len(s) == 10 for s in sets)
    assert len(set().union(*sets)) == 40
    assert m.extent == (0.0, 0.0, 2750.0, 2000.0)


def test_poi_profile_validation():
    with pytest.raises(MobilityError):
        PoiProfile(0, (), 0.5)
    with pytest.raises(MobilityError):
        PoiProfile(0, (1,), 1.5)


def test_waypoints_interest_zero_and_one():
    m = grid_map(6, 6, 100.0, 2)
    pois = set(m.pois[0])
    rng = random.Random(0)
    always = PoiProfile(0, tuple(pois), 1.0)
    assert all(draw_waypoint(m, always, rng) in pois for _ in range(2000))
    never = PoiProfile(0, tuple(pois), 0.0)
    counts = [0] * len(m)
    for _ in range(36000):
        counts[draw_waypoint(m, never, rng)] += 1
    assert min(counts) > 800 and max(counts) < 1200  # ~1000 each


def test_waypoint_interest_frequency():
    m = grid_map(12, 9, 250.0, 10)
    pois = m.pois[1]
    prof = PoiProfile(1, pois, 0.8)
    rng = random.Random(42)
    n = 10_000
    hits = sum(draw_waypoint(m, prof, rng) in set(pois) for _ in range(n))
    # mass on the POI set: 0.8 + 0.2 * |pois| / |coordinates|
    expected = 0.8 + 0.2 * len(pois) / len(m)
    assert abs(hits / n - expected) <= 0.02
    assert abs(hits / n - 0.8) <= 0.04


def test_poi_walk_stays_on_map_edges():
    m = grid_map(5, 5, 100.0, 2)
    prof = PoiProfile(0, m.pois[0], 0.8)
    rng = random.Random(9)
    st = poi_initial(m, prof, (3, 12), rng)
    for _ in range(3000):
        poi_step(st, 1.0, m, prof, (3, 12), (0, 10), rng)
        x, y = st.position
        # on a grid every edge point has one coordinate on a grid line
        on_line = min(abs(x / 100 - round(x / 100)), abs(y / 100 - round(y / 100))) < 1e-9
        assert on_line and 0 <= x <= 400 and 0 <= y <= 400
        if st.mode == MOVING:
            assert abs(st.velocity.dx) < 1e-9 or abs(st.velocity.dy) < 1e-9


def test_place_destinations_zero_variation_returns_pois():
    m = grid_map(12, 9, 250.0, 10)
    out = place_destinations(m, 7, 0.0, random.Random(1))
    assert len(set(out)) == 7
    assert all(p in [m.coordinates[i] for i in m.all_pois] for p in out)


def test_place_destinations_variation_constraint():
    m = grid_map(12, 9, 250.0, 10)
    for seed in range(20):
        rng = random.Random(seed)
        chosen = random.Random(seed).sample(m.all_pois, 7)
        out = place_destinations(m, 7, 500.0, rng)
        for poi_idx, pos in zip(chosen, out):
            poi = m.coordinates[poi_idx]
            assert math.dist(poi, pos) > 500.0


def test_place_destinations_infeasible():
    m = grid_map(12, 9, 250.0, 10)
    with pytest.raises(NoFeasibleCoordinate):
        place_destinations(m, 3, 10_000.0, random.Random(0))
    with pytest.raises(MobilityError):
        place_destinations(m, 41, 0.0, random.Random(0))
