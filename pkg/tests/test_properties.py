import math
import random

from hypothesis import assume, given, settings
from hypothesis import strategies as st

from geodtn.contacts import Mode, arbitrate_slots, detect_contacts
from geodtn.geometry import Position, Velocity, intersect_time, projected_distance, relative_angle
from geodtn.messages import (EVICT_OLDEST, EVICT_UTILITY, UNSET, Buffer, MessageCopy, evict_for, message_utility,
                             split_tickets, sync_thresholds)
from geodtn.routing import EncounterContext, NodeView, Scheme, cond_abgr, cond_tbgr_relay, decide

coord = st.floats(-1e4, 1e4, allow_nan=False)
small = st.floats(-50, 50, allow_nan=False).filter(lambda v: abs(v) > 1e-3)
positive = st.floats(0.1, 100.0)
angle = st.floats(0.0, math.pi / 2 - 1e-3)


@given(coord, coord, small, small, coord, coord, coord, coord, st.floats(0.01, 100.0))
def test_relative_angle_translation_and_scaling(px, py, vx, vy, dx, dy, tx, ty, k):
    assume(math.hypot(dx - px, dy - py) > 1.0)
    phi = relative_angle((px, py), (vx, vy), (dx, dy))
    assert 0.0 <= phi <= math.pi
    moved = relative_angle((px + tx, py + ty), (vx, vy), (dx + tx, dy + ty))
    scaled = relative_angle((px, py), (vx * k, vy * k), (dx, dy))
    assert math.isclose(phi, moved, abs_tol=1e-6)
    assert math.isclose(phi, scaled, abs_tol=1e-9)


@given(st.floats(11.0, 1e4), st.floats(0.1, 10.0), positive, angle, angle)
def test_intersect_time_increases_with_angle(dist, range_, speed, a, b):
    lo, hi = sorted((a, b))
    assert intersect_time(dist, range_, speed, lo) <= intersect_time(dist, range_, speed, hi)


@given(st.floats(11.0, 1e4), st.floats(0.1, 10.0), positive, positive, angle)
def test_intersect_time_decreases_with_speed(dist, range_, s1, s2, phi):
    lo, hi = sorted((s1, s2))
    assert intersect_time(dist, range_, hi, phi) <= intersect_time(dist, range_, lo, phi)


@given(st.floats(0.0, 1e4), st.floats(0.0, 60.0), st.floats(0.0, 50.0), st.floats(0.1, 100.0))
def test_projected_distance_perpendicular(dist, window, speed, range_):
    assert projected_distance(dist, window, speed, math.pi / 2, range_) == dist - range_


@given(st.integers(2, 10_000))
def test_split_tickets(c):
    give, keep = split_tickets(c)
    assert give + keep == c and 1 <= give <= keep


def copy_with(tickets=1, vt=UNSET, vd=UNSET, created=0.0, mid=1, size=10):
    return MessageCopy(mid, 0, 99, size, created, 1000.0, tickets, vt, vd)


@given(st.integers(1, 40), st.integers(1, 40), st.floats(0.0, 2000.0), st.floats(0.0, 999.0))
def test_utility_monotone_in_tickets(c1, c2, vt, elapsed):
    lo, hi = sorted((c1, c2))
    assert message_utility(copy_with(lo, vt), elapsed) <= message_utility(copy_with(hi, vt), elapsed)


@given(st.integers(1, 40), st.floats(0.0, 2000.0), st.floats(0.0, 2000.0), st.floats(0.0, 999.0))
def test_utility_non_increasing_in_threshold(c, v1, v2, elapsed):
    lo, hi = sorted((v1, v2))
    u_lo, u_hi = message_utility(copy_with(c, lo), elapsed), message_utility(copy_with(c, hi), elapsed)
    assert 0.0 <= u_hi <= u_lo <= 1.0
    assert message_utility(copy_with(c, UNSET), elapsed) <= u_hi


maybe = st.one_of(st.just(UNSET), st.floats(0.0, 1e4))


@given(maybe, maybe, maybe, maybe)
def test_sync_takes_minimum_and_never_raises_thresholds(t1, d1, t2, d2):
    a, b = copy_with(vt=t1, vd=d1), copy_with(vt=t2, vd=d2)
    sync_thresholds(a, b)
    assert a.threshold_time == b.threshold_time == min(t1, t2)
    assert a.threshold_dist == b.threshold_dist == min(d1, d2)
    a.lower_threshold_time(a.threshold_time + 1.0)
    assert a.threshold_time == min(t1, t2)


@given(st.lists(st.tuples(st.integers(1, 50), st.floats(0.0, 900.0), st.floats(0.0, 2000.0)), max_size=30),
       st.integers(1, 200), st.integers(1, 50), st.sampled_from([EVICT_OLDEST, EVICT_UTILITY]))
def test_evict_never_leaves_buffer_over_capacity(items, capacity, incoming, policy):
    assume(incoming <= capacity)
    buf = Buffer(capacity)
    for k, (size, created, vt) in enumerate(items):
        if buf.used + size <= capacity:
            buf.add(copy_with(mid=k, size=size, created=created, vt=vt))
    before = {c.id for c in buf}
    dropped = evict_for(buf, incoming, 950.0, policy)
    assert buf.used + incoming <= capacity
    assert buf.used == sum(c.size for c in buf)
    assert set(dropped) | {c.id for c in buf} == before


points = st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), max_size=25)


@given(points, st.floats(0.1, 50.0))
def test_contact_symmetry_and_range(pts, range_):
    pairs = set(detect_contacts(pts, range_))
    flipped = set(detect_contacts(pts[::-1], range_))
    n = len(pts)
    assert pairs == {tuple(sorted((n - 1 - i, n - 1 - j))) for i, j in flipped}
    for i in range(n):
        for j in range(i + 1, n):
            assert ((i, j) in pairs) == (math.dist(pts[i], pts[j]) <= range_)


@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)).filter(lambda p: p[0] < p[1]), unique=True),
       st.integers(0, 2**32))
def test_arbitration_is_a_maximal_matching(pairs, seed):
    matched = arbitrate_slots(pairs, random.Random(seed))
    nodes = [n for p in matched for n in p]
    assert len(nodes) == len(set(nodes))
    assert set(matched) <= set(pairs)
    busy = set(nodes)
    assert all(a in busy or b in busy for a, b in pairs)


heading = st.floats(0.0, 2 * math.pi)


def view(nid, x, y, speed, theta, **kw):
    return NodeView(nid, Position(x, y), Velocity(speed * math.cos(theta), speed * math.sin(theta)), **kw)


@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(0.5, 15), heading,
       st.floats(-500, 500), st.floats(-500, 500), st.floats(0.5, 15), heading)
def test_abgr_with_unset_threshold_implies_tbgr(cx, cy, cs, ct, px, py, ps, pt):
    ctx = EncounterContext(view(0, cx, cy, cs, ct), view(1, px, py, ps, pt), {99: Position(600.0, 0.0)}, 0.0, 10.0)
    copy = copy_with(4)
    if cond_abgr(ctx, copy):
        assert cond_tbgr_relay(ctx, copy)


scheme = st.sampled_from(list(Scheme))


@settings(max_examples=300)
@given(scheme, st.floats(-500, 500), st.floats(-500, 500), st.floats(0.0, 15), heading,
       st.floats(-500, 500), st.floats(-500, 500), st.floats(0.0, 15), heading,
       st.integers(1, 16), maybe, maybe, st.floats(0.0, 990.0), st.booleans())
def test_decide_is_pure_and_thresholds_only_drop(sch, cx, cy, cs, ct, px, py, ps, pt, c, vt, vd, now, met):
    enc = frozenset({99}) if met else frozenset()
    carrier = view(0, cx, cy, cs, ct, encountered=enc)
    peer = view(1, px, py, ps, pt, encountered=enc)
    ctx = EncounterContext(carrier, peer, {99: Position(600.0, 0.0)}, now, 10.0)
    carried = [copy_with(c, vt, vd)]
    first = decide(sch, ctx, carried)
    assert first == decide(sch, ctx, [copy_with(c, vt, vd)])
    for act in first:
        assert act.mode is not Mode.DELIVER
        assert 1 <= act.tickets <= c
        if act.threshold_time is not None:
            assert act.threshold_time < vt
        if act.threshold_dist is not None:
            assert act.threshold_dist < vd
        if sch in (Scheme.DD,):
            raise AssertionError("direct delivery never relays")
        if sch in (Scheme.S_SAW, Scheme.S_ABGR, Scheme.S_TBGR) and act.mode is Mode.REPLICATE:
            assert act.tickets == 1
