import math

import pytest

from geodtn.messages import (EVICT_OLDEST, EVICT_UTILITY, UNSET, AckLedger, Buffer, Expired, MessageCopy,
                             MessageError, MismatchedMessage, NotSplittable, apply_acks, evict_for, message_utility,
                             remaining_ttl, split_tickets, sync_thresholds)


def copy(mid=1, tickets=1, created=0.0, ttl=3600.0, size=100, vt=UNSET, vd=UNSET):
    return MessageCopy(mid, 0, 99, size, created, ttl, tickets, vt, vd)


@pytest.mark.parametrize("tickets,expected", [(10, (5, 5)), (5, (2, 3)), (2, (1, 1)), (3, (1, 2))])
def test_split_tickets(tickets, expected):
    assert split_tickets(tickets) == expected


@pytest.mark.parametrize("tickets", [1, 0, -3])
def test_split_tickets_refuses_single(tickets):
    with pytest.raises(NotSplittable):
        split_tickets(tickets)


def test_remaining_ttl():
    assert remaining_ttl(copy(ttl=3600), 600) == 3000
    assert remaining_ttl(copy(created=50, ttl=3600), 50) == 3600
    assert remaining_ttl(copy(ttl=3600), 3600) == 0
    assert remaining_ttl(copy(ttl=3600), 5000) == 0


def test_sync_thresholds_takes_minimum():
    a, b = copy(vt=100), copy(vt=300)
    sync_thresholds(a, b)
    assert a.threshold_time == b.threshold_time == 100
    a, b = copy(vt=UNSET, vd=40), copy(vt=250)
    sync_thresholds(a, b)
    assert a.threshold_time == b.threshold_time == 250
    assert a.threshold_dist == b.threshold_dist == 40
    a, b = copy(), copy()
    sync_thresholds(a, b)
    assert math.isinf(a.threshold_time) and math.isinf(b.threshold_dist)


def test_sync_thresholds_rejects_different_messages():
    with pytest.raises(MismatchedMessage):
        sync_thresholds(copy(1), copy(2))


def test_message_utility_examples():
    # rem 600 in each case
    assert message_utility(copy(ttl=600, vt=0.0, tickets=1), 0) == 1.0
    assert message_utility(copy(ttl=600, vt=600.0, tickets=4), 0) == 0.0
    assert message_utility(copy(ttl=600, vt=300.0, tickets=2), 0) == 0.75
    assert message_utility(copy(ttl=600, tickets=8), 0) == 0.0  # unset threshold
    assert message_utility(copy(ttl=600, vt=900.0, tickets=8), 0) == 0.0  # clamped below


def test_message_utility_expired():
    with pytest.raises(Expired):
        message_utility(copy(ttl=600), 600)


def test_copy_needs_ticket_and_thresholds_only_decrease():
    with pytest.raises(MessageError):
        copy(tickets=0)
    c = copy(vt=100)
    c.lower_threshold_time(200)
    assert c.threshold_time == 100
    c.lower_threshold_time(50)
    c.lower_threshold_dist(10)
    assert (c.threshold_time, c.threshold_dist) == (50, 10)


def test_spawn_keeps_thresholds_and_extends_trace():
    c = MessageCopy(3, 0, 9, 10, 0.0, 100.0, 4, 20.0, 7.0, (0,))
    s = c.spawn(2, 5)
    assert (s.tickets, s.threshold_time, s.threshold_dist, s.hop_trace) == (2, 20.0, 7.0, (0, 5))
    assert c.tickets == 4


def test_buffer_accounting():
    b = Buffer(250)
    b.add(copy(1, size=100))
    b.add(copy(2, size=100))
    assert b.used == 200 and len(b) == 2 and 1 in b
    with pytest.raises(MessageError):
        b.add(copy(1, size=10))
    with pytest.raises(MessageError):
        b.add(copy(3, size=100))
    b.remove(1)
    assert b.used == 100 and b.free() == 150


def test_evict_nothing_when_space_suffices():
    b = Buffer(300)
    b.add(copy(1, size=100))
    assert evict_for(b, 100, 0, EVICT_UTILITY) == []


def test_evict_lowest_utility_first():
    b = Buffer(200)
    # rem 600: vt 480 -> p 0.2 -> U 0.2 ; vt 60 -> p 0.9 -> U 0.9
    b.add(copy(1, ttl=600, vt=60.0, size=100))
    b.add(copy(2, ttl=600, vt=480.0, size=100))
    assert evict_for(b, 100, 0, EVICT_UTILITY) == [2]
    assert 1 in b


def test_evict_ties_oldest_first():
    b = Buffer(300)
    for mid, created in ((5, 30.0), (6, 10.0), (7, 20.0)):
        b.add(copy(mid, created=created, size=100))
    assert evict_for(b, 200, 40.0, EVICT_UTILITY) == [6, 7]
    assert b.used + 200 <= b.capacity


def test_evict_oldest_policy_ignores_utility():
    b = Buffer(200)
    b.add(copy(1, created=0.0, ttl=600, vt=10.0, size=100))
    b.add(copy(2, created=5.0, ttl=600, size=100))
    assert evict_for(b, 100, 6.0, EVICT_OLDEST) == [1]


def test_evict_rejects_oversized():
    with pytest.raises(MessageError):
        evict_for(Buffer(100), 101, 0)


def test_apply_acks():
    b = Buffer()
    b.add(copy(1))
    b.add(copy(2))
    assert apply_acks(b, AckLedger()) == []
    ledger = AckLedger({2, 40})
    assert apply_acks(b, ledger) == [2]
    assert 2 not in b and b.used == 100
    assert apply_acks(b, AckLedger({41})) == []


def test_ack_ledger_merge():
    a = AckLedger({1})
    a.merge(AckLedger({2}))
    a.merge([3])
    a.record(4)
    assert a.delivered_ids == {1, 2, 3, 4} and 3 in a and len(a) == 4
