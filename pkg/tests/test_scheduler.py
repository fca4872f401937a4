"""
Tests for turning bandwidth shares into byte grants.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import collections
import itertools

import pytest

from epsched.common import NothingToSchedule, ParseError, RangeError, StateError
from epsched.priority import PriorityParams, Urgency
from epsched.scheduler import (
    Allocation,
    Quantum,
    StreamCompleted,
    StreamOpened,
    StreamScheduler,
    StreamState,
    Strategy,
    StrategyKind,
    strategy_from_name,
)
from epsched.weights import RequestSet

_UNBOUNDED_BYTES = 10**9


def _stream(stream_id, bytes_total, urgency=3, arrival_index=0, incremental=True) -> StreamState:
    return StreamState(
        stream_id,
        priority=PriorityParams(Urgency(urgency), incremental),
        bytes_total=bytes_total,
        arrival_index=arrival_index,
    )


def _streams_with_levels(levels):
    return [_stream(f"s{index}", 700 + 2300 * index, level, index) for index, level in enumerate(levels)]


def _scheduler(strategy, streams, quantum=None) -> StreamScheduler:
    result = StreamScheduler(strategy, quantum)
    for stream in streams:
        result.on_stream_event(StreamOpened(stream))
    return result


def _drained_allocations(scheduler):
    result = []
    while scheduler.has_active_streams:
        allocation = scheduler.next_allocation()
        result.append(allocation)
        if allocation.is_final:
            scheduler.on_stream_event(StreamCompleted(allocation.stream_id))
    return result


def _completion_order(allocations):
    return [allocation.stream_id for allocation in allocations if allocation.is_final]


def _granted_bytes_until(scheduler, total_bytes):
    result = collections.Counter()
    granted_total = 0
    while granted_total < total_bytes:
        allocation = scheduler.next_allocation()
        result[allocation.stream_id] += allocation.grant_bytes
        granted_total += allocation.grant_bytes
    return result


def test_can_create_strategies():
    assert Strategy.weighted_incremental(0.5).label == "weighted-0.5"
    assert Strategy.weighted_incremental(1).label == "weighted-1"
    assert Strategy.round_robin().label == "round-robin"
    assert strategy_from_name("sequential-fifo") == Strategy.sequential_fifo()
    assert strategy_from_name("weighted", 0.25) == Strategy(StrategyKind.weighted_incremental, 0.25)


@pytest.mark.parametrize("alpha", [None, -0.5, 1.5])
def test_fails_on_weighted_strategy_with_broken_alpha(alpha):
    with pytest.raises(RangeError):
        Strategy.weighted_incremental(alpha)


def test_fails_on_alpha_for_unweighted_strategy():
    with pytest.raises(RangeError, match="only the weighted"):
        Strategy(StrategyKind.round_robin, 0.5)


def test_fails_on_unknown_strategy_name():
    with pytest.raises(ParseError, match="sequential-fifo"):
        strategy_from_name("lifo")


@pytest.mark.parametrize("size_bytes", [0, -1, 1.5, True])
def test_fails_on_broken_quantum(size_bytes):
    with pytest.raises(RangeError):
        Quantum(size_bytes)


def test_can_send_first_stream_until_complete_with_sequential_fifo():
    scheduler = _scheduler(Strategy.sequential_fifo(), [_stream("A", 3000, 7, 0), _stream("B", 1500, 0, 1)])
    assert _drained_allocations(scheduler) == [
        Allocation("A", 1200, False),
        Allocation("A", 1200, False),
        Allocation("A", 600, True),
        Allocation("B", 1200, False),
        Allocation("B", 300, True),
    ]


def test_can_send_most_urgent_stream_first_with_sequential_by_urgency():
    scheduler = _scheduler(
        Strategy.sequential_by_urgency(),
        [_stream("A", 1000, 5, 0), _stream("B", 1000, 1, 1), _stream("C", 1000, 1, 2)],
    )
    assert _completion_order(_drained_allocations(scheduler)) == ["B", "C", "A"]


def test_can_complete_streams_by_urgency_and_arrival():
    for levels in itertools.product((0, 3, 7), repeat=4):
        streams = [
            _stream(f"s{index}", 500 + 900 * index, level, index) for index, level in enumerate(levels)
        ]
        scheduler = _scheduler(Strategy.sequential_by_urgency(), streams)
        expected_order = [
            stream.stream_id for stream in sorted(streams, key=lambda s: (s.priority.urgency.level, s.arrival_index))
        ]
        assert _completion_order(_drained_allocations(scheduler)) == expected_order


def test_can_cycle_streams_with_round_robin():
    scheduler = _scheduler(
        Strategy.round_robin(), [_stream("A", 2400, 0, 0), _stream("B", 1200, 7, 1), _stream("C", 3000, 3, 2)]
    )
    assert _drained_allocations(scheduler) == [
        Allocation("A", 1200, False),
        Allocation("B", 1200, True),
        Allocation("C", 1200, False),
        Allocation("A", 1200, True),
        Allocation("C", 1200, False),
        Allocation("C", 600, True),
    ]


def test_can_alternate_equally_urgent_streams():
    scheduler = _scheduler(
        Strategy.weighted_incremental(1), [_stream("A", _UNBOUNDED_BYTES, 3, 0), _stream("B", _UNBOUNDED_BYTES, 3, 1)]
    )
    allocations = [scheduler.next_allocation() for _ in range(10)]
    assert [allocation.stream_id for allocation in allocations] == ["A", "B"] * 5
    assert {allocation.grant_bytes for allocation in allocations} == {1200}


def test_can_grant_15_of_16_quanta_to_most_urgent_stream():
    scheduler = _scheduler(
        Strategy.weighted_incremental(1), [_stream("A", _UNBOUNDED_BYTES, 0, 0), _stream("B", _UNBOUNDED_BYTES, 7, 1)]
    )
    assert _granted_bytes_until(scheduler, 16 * 1200) == {"A": 15 * 1200, "B": 1200}
    assert _granted_bytes_until(scheduler, 16 * 1200) == {"A": 15 * 1200, "B": 1200}


def test_can_update_active_streams_and_weights():
    scheduler = _scheduler(
        Strategy.weighted_incremental(1), [_stream("A", 1200, 3, 0), _stream("B", 5000, 3, 1)]
    )
    active_streams, weight_table = scheduler.on_stream_event(StreamOpened(_stream("C", 5000, 5, 2)))
    assert [stream.stream_id for stream in active_streams] == ["A", "B", "C"]
    assert set(weight_table.shares.keys()) == {"A", "B", "C"}
    assert weight_table.urgency_ratios == {3: 2 / 3, 5: 1 / 3}

    allocation = scheduler.next_allocation()
    assert allocation == Allocation("A", 1200, True)
    active_streams, weight_table = scheduler.on_stream_event(StreamCompleted("A"))
    assert [stream.stream_id for stream in active_streams] == ["B", "C"]
    assert weight_table.urgency_ratios == {3: 0.5, 5: 0.5}


def test_can_give_full_share_to_last_active_stream():
    scheduler = _scheduler(Strategy.weighted_incremental(0.5), [_stream("A", 1000, 0, 0), _stream("B", 1000, 7, 1)])
    assert scheduler.next_allocation() == Allocation("A", 1000, True)
    _, weight_table = scheduler.on_stream_event(StreamCompleted("A"))
    assert weight_table.shares == {"B": 1.0}


def test_can_preserve_deficit_of_surviving_streams():
    scheduler = _scheduler(
        Strategy.weighted_incremental(1), [_stream("A", 100, 0, 0), _stream("B", _UNBOUNDED_BYTES, 0, 1)]
    )
    assert scheduler.next_allocation() == Allocation("A", 100, True)
    assert scheduler.stream("A").deficit == pytest.approx(1100)
    scheduler.stream("B").deficit = 42.5
    scheduler.on_stream_event(StreamCompleted("A"))
    assert scheduler.stream("B").deficit == 42.5


def test_fails_on_duplicate_open():
    scheduler = _scheduler(Strategy.round_robin(), [_stream("A", 1000, 3, 0)])
    with pytest.raises(StateError, match="already open"):
        scheduler.on_stream_event(StreamOpened(_stream("A", 1000, 3, 1)))


def test_fails_on_duplicate_arrival_index():
    scheduler = _scheduler(Strategy.round_robin(), [_stream("A", 1000, 3, 0)])
    with pytest.raises(StateError, match="arrival index"):
        scheduler.on_stream_event(StreamOpened(_stream("B", 1000, 3, 0)))


def test_fails_on_opening_empty_stream():
    with pytest.raises(StateError, match="bytes left"):
        _scheduler(Strategy.round_robin(), [_stream("A", 0, 3, 0)])


def test_fails_on_unknown_complete():
    scheduler = _scheduler(Strategy.round_robin(), [_stream("A", 1000, 3, 0)])
    with pytest.raises(StateError, match="unknown"):
        scheduler.on_stream_event(StreamCompleted("B"))


def test_fails_on_complete_with_bytes_left():
    scheduler = _scheduler(Strategy.round_robin(), [_stream("A", 1000, 3, 0)])
    with pytest.raises(StateError, match="1000 of 1000 bytes left"):
        scheduler.on_stream_event(StreamCompleted("A"))


def test_fails_on_allocation_without_active_streams():
    scheduler = StreamScheduler(Strategy.weighted_incremental(0.5))
    with pytest.raises(NothingToSchedule):
        scheduler.next_allocation()


def test_can_serve_non_incremental_stream_exclusively():
    scheduler = _scheduler(
        Strategy.weighted_incremental(1),
        [
            _stream("image", 5000, 3, 0),
            _stream("script", 2000, 3, 1, incremental=False),
            _stream("font", 2000, 1, 2),
        ],
    )
    allocations = _drained_allocations(scheduler)
    # The more urgent incremental font interleaves, the equally urgent image has to wait for the script.
    assert _completion_order(allocations) == ["font", "script", "image"]
    first_image_index = next(index for index, allocation in enumerate(allocations) if allocation.stream_id == "image")
    script_final_index = allocations.index(Allocation("script", 800, True))
    assert first_image_index > script_final_index


def test_can_keep_equally_urgent_streams_within_one_quantum():
    streams = [_stream(f"s{index}", 3000 + 1700 * index, 4, index) for index in range(6)]
    scheduler = _scheduler(Strategy.weighted_incremental(0.7), streams)
    while scheduler.has_active_streams:
        allocation = scheduler.next_allocation()
        active_bytes_sent = [stream.bytes_sent for stream in scheduler.active_streams if not stream.is_complete]
        if len(active_bytes_sent) >= 2:
            assert max(active_bytes_sent) - min(active_bytes_sent) <= 1200
        if allocation.is_final:
            scheduler.on_stream_event(StreamCompleted(allocation.stream_id))


def test_can_match_round_robin_with_alpha_0():
    for levels in itertools.product((0, 2, 5, 7), repeat=3):
        weighted_allocations = _drained_allocations(
            _scheduler(Strategy.weighted_incremental(0), _streams_with_levels(levels))
        )
        round_robin_allocations = _drained_allocations(_scheduler(Strategy.round_robin(), _streams_with_levels(levels)))
        assert weighted_allocations == round_robin_allocations


def test_can_converge_to_shares_of_most_and_least_urgent_pairs():
    for urgent_level, other_level in itertools.combinations(range(8), 2):
        scheduler = _scheduler(
            Strategy.weighted_incremental(1),
            [_stream("urgent", _UNBOUNDED_BYTES, urgent_level, 0), _stream("other", _UNBOUNDED_BYTES, other_level, 1)],
        )
        weight_table = scheduler.weight_table
        expected_ratio = weight_table.share("urgent") / weight_table.share("other")
        granted_bytes = _granted_bytes_until(scheduler, 10_000_000)
        actual_ratio = granted_bytes["urgent"] / granted_bytes["other"]
        assert actual_ratio == pytest.approx(expected_ratio, rel=0.02), (urgent_level, other_level)


def test_can_grant_every_stream_without_starvation():
    streams = [_stream("urgent", _UNBOUNDED_BYTES, 0, 0)] + [
        _stream(f"lazy{index}", _UNBOUNDED_BYTES, 7, index) for index in range(1, 16)
    ]
    scheduler = _scheduler(Strategy.weighted_incremental(1), streams)
    granted_stream_ids = set()
    granted_total = 0
    while len(granted_stream_ids) < len(streams):
        allocation = scheduler.next_allocation()
        assert allocation.grant_bytes > 0
        granted_stream_ids.add(allocation.stream_id)
        granted_total += allocation.grant_bytes
    assert granted_total <= 16 * 1200 * 8


def test_can_use_static_weights():
    static_requests = RequestSet([("A", 0), ("B", 0), ("C", 7)])
    scheduler = StreamScheduler(Strategy.weighted_incremental(1), static_requests=static_requests)
    assert scheduler.has_static_weights
    scheduler.on_stream_event(StreamOpened(_stream("A", 1000, 0, 0)))
    _, weight_table = scheduler.on_stream_event(StreamOpened(_stream("C", 1000, 7, 2)))
    # Ratios stay the ones of the whole population, unlike the 0.5 each with active set weights.
    assert weight_table.urgency_ratios == {0: 2 / 3, 7: 1 / 3}
    assert weight_table.share("A") == pytest.approx((1 / (2 / 3)) / (1 / (2 / 3) + 1 / (7 + 1 / 3)))


def test_fails_on_static_weights_for_unknown_stream():
    scheduler = StreamScheduler(Strategy.weighted_incremental(1), static_requests=RequestSet([("A", 0)]))
    with pytest.raises(StateError, match="static requests"):
        scheduler.on_stream_event(StreamOpened(_stream("B", 1000, 0, 0)))


def test_can_produce_identical_grants_for_identical_input():
    def allocations():
        streams = [_stream(f"s{index}", 5000 * (index + 1), index % 8, index) for index in range(8)]
        return _drained_allocations(_scheduler(Strategy.weighted_incremental(0.6), streams))

    assert allocations() == allocations()


def test_can_use_custom_quantum():
    scheduler = _scheduler(Strategy.round_robin(), [_stream("A", 1000, 3, 0)], Quantum(400))
    assert [allocation.grant_bytes for allocation in _drained_allocations(scheduler)] == [400, 400, 200]
