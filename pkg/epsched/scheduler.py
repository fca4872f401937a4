"""
Stream schedulers that turn bandwidth shares into byte grants.

A :py:class:`StreamScheduler` is the integration point for a host server:
the host reports streams opening and completing with
:py:meth:`StreamScheduler.on_stream_event` and asks for the next
:py:meth:`StreamScheduler.next_allocation` whenever it can send data.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import bisect
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, List, NamedTuple, Optional, Tuple, Union

from .common import InvariantError, NothingToSchedule, ParseError, RangeError, StateError
from .priority import PriorityParams
from .weights import RequestSet, WeightTable, compute_weight_table, normalize, validated_alpha

#: Default number of bytes of a single grant, which is a typical QUIC payload.
DEFAULT_QUANTUM_SIZE = 1200

# Deficits that are a tiny rounding error away from the next byte count as that byte.
_DEFICIT_TOLERANCE = 1e-6

_log = logging.getLogger("epsched")

StreamId = Hashable


class StrategyKind(Enum):
    """
    Possible ways to deliver concurrent streams.
    """

    #: one stream after another in request order
    sequential_fifo = "sequential-fifo"
    #: one stream after another, most urgent first
    sequential_by_urgency = "sequential-urgency"
    #: one quantum per stream in turn
    round_robin = "round-robin"
    #: interleaved with shares derived from urgency
    weighted_incremental = "weighted"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind == StrategyKind.weighted_incremental:
            if self.alpha is None:
                raise RangeError("weighted incremental strategy requires an alpha between 0 and 1")
            object.__setattr__(self, "alpha", validated_alpha(self.alpha))
        elif self.alpha is not None:
            raise RangeError(f"only the weighted incremental strategy accepts an alpha: {self.kind.value}")

    @staticmethod
    def sequential_fifo() -> "Strategy":
        return Strategy(StrategyKind.sequential_fifo)

    @staticmethod
    def sequential_by_urgency() -> "Strategy":
        return Strategy(StrategyKind.sequential_by_urgency)

    @staticmethod
    def round_robin() -> "Strategy":
        return Strategy(StrategyKind.round_robin)

    @staticmethod
    def weighted_incremental(alpha: float) -> "Strategy":
        return Strategy(StrategyKind.weighted_incremental, alpha)

    @property
    def is_weighted(self) -> bool:
        return self.kind == StrategyKind.weighted_incremental

    @property
    def label(self) -> str:
        """name to use in reports and file names, for example ``weighted-0.25``"""
        return f"{self.kind.value}-{self.alpha:g}" if self.is_weighted else self.kind.value


#: Names of all strategies as accepted by :py:func:`strategy_from_name`.
STRATEGY_NAMES = tuple(strategy_kind.value for strategy_kind in StrategyKind)


def strategy_from_name(name: str, alpha: Optional[float] = None) -> Strategy:
    try:
        kind = StrategyKind(name)
    except ValueError:
        raise ParseError(f"strategy is {name!r} but must be one of: {', '.join(STRATEGY_NAMES)}") from None
    return Strategy(kind, alpha)


@dataclass(frozen=True)
class Quantum:
    """
    Base number of bytes granted to a stream at once.
    """

    size_bytes: int = DEFAULT_QUANTUM_SIZE

    def __post_init__(self):
        if isinstance(self.size_bytes, bool) or not isinstance(self.size_bytes, int) or self.size_bytes <= 0:
            raise RangeError(f"quantum size must be a positive number of bytes but is {self.size_bytes!r}")


@dataclass
class StreamState:
    """
    Progress of a single stream as tracked by a scheduler.
    """

    stream_id: StreamId
    priority: PriorityParams = field(default_factory=PriorityParams)
    bytes_total: int = 0
    bytes_sent: int = 0
    deficit: float = 0.0
    opened_at: float = 0.0
    arrival_index: int = 0

    def __post_init__(self):
        if self.bytes_total < 0:
            raise InvariantError(f"stream {self.stream_id!r}: total bytes must be at least 0: {self.bytes_total}")
        if not 0 <= self.bytes_sent <= self.bytes_total:
            raise InvariantError(
                f"stream {self.stream_id!r}: sent bytes must be between 0 and {self.bytes_total}: {self.bytes_sent}"
            )

    @property
    def remaining(self) -> int:
        return self.bytes_total - self.bytes_sent

    @property
    def is_complete(self) -> bool:
        return self.bytes_sent == self.bytes_total


@dataclass(frozen=True)
class StreamOpened:
    stream: StreamState


@dataclass(frozen=True)
class StreamCompleted:
    stream_id: StreamId


StreamEvent = Union[StreamOpened, StreamCompleted]


class Allocation(NamedTuple):
    stream_id: StreamId
    grant_bytes: int
    #: ``True`` if the grant contains the last bytes of the stream
    is_final: bool


def _whole_bytes(deficit: float) -> int:
    return math.floor(deficit + _DEFICIT_TOLERANCE)


class StreamScheduler:
    """
    Scheduler deciding which active stream may send how many bytes next
    according to a :py:class:`Strategy`.

    With :py:attr:`StrategyKind.weighted_incremental`, the shares of the
    active streams are realized with deficit round robin: whenever a stream's
    turn comes, its deficit grows by ``share * n * quantum`` and it may send
    up to its deficit in grants of at most one quantum. Streams that are not
    incremental are sent exclusively, most urgent first, unless an
    incremental stream is more urgent.

    Shares are computed over the currently active streams unless
    ``static_requests`` describes a fixed population to compute them from.

    Instances are not thread safe.
    """

    def __init__(
        self, strategy: Strategy, quantum: Optional[Quantum] = None, static_requests: Optional[RequestSet] = None
    ):
        self._strategy = strategy
        self._quantum = quantum if quantum is not None else Quantum()
        self._static_weight_table = (
            compute_weight_table(static_requests, strategy.alpha)
            if static_requests is not None and strategy.is_weighted
            else None
        )
        self._active_streams: List[StreamState] = []
        self._stream_id_to_stream_map: Dict[StreamId, StreamState] = {}
        self._weight_table: Optional[WeightTable] = None
        self._last_served_arrival_index: Optional[int] = None
        self._current_stream: Optional[StreamState] = None

    @property
    def strategy(self) -> Strategy:
        return self._strategy

    @property
    def quantum(self) -> Quantum:
        return self._quantum

    @property
    def has_static_weights(self) -> bool:
        return self._static_weight_table is not None

    @property
    def has_active_streams(self) -> bool:
        return len(self._active_streams) >= 1

    @property
    def active_streams(self) -> List[StreamState]:
        """active streams ordered by arrival index"""
        return list(self._active_streams)

    @property
    def weight_table(self) -> Optional[WeightTable]:
        """
        Shares of the active streams, or ``None`` if there are none or the
        strategy does not use weights.
        """
        return self._weight_table

    def stream(self, stream_id: StreamId) -> StreamState:
        return self._stream_id_to_stream_map[stream_id]

    def on_stream_event(self, event: StreamEvent) -> Tuple[List[StreamState], Optional[WeightTable]]:
        """
        Update the active streams according to ``event`` and recompute the
        weights.

        :return: the active streams and the refreshed weight table
        """
        if isinstance(event, StreamOpened):
            self._open(event.stream)
        elif isinstance(event, StreamCompleted):
            self._complete(event.stream_id)
        else:
            raise TypeError(f"event must be StreamOpened or StreamCompleted: {event!r}")
        self._refresh_weight_table()
        return self.active_streams, self._weight_table

    def _open(self, stream: StreamState):
        if stream.stream_id in self._stream_id_to_stream_map:
            raise StateError(f"stream {stream.stream_id!r} is already open")
        arrival_indices = [active_stream.arrival_index for active_stream in self._active_streams]
        insert_index = bisect.bisect_left(arrival_indices, stream.arrival_index)
        if insert_index < len(arrival_indices) and arrival_indices[insert_index] == stream.arrival_index:
            raise StateError(f"stream {stream.stream_id!r}: arrival index {stream.arrival_index} is already in use")
        if stream.is_complete:
            raise StateError(f"stream {stream.stream_id!r} must have bytes left to send")
        if self._static_weight_table is not None and stream.stream_id not in self._static_weight_table.shares:
            raise StateError(f"stream {stream.stream_id!r} is not part of the static requests")
        self._active_streams.insert(insert_index, stream)
        self._stream_id_to_stream_map[stream.stream_id] = stream
        _log.debug("opened stream %r with %d bytes", stream.stream_id, stream.bytes_total)

    def _complete(self, stream_id: StreamId):
        stream = self._stream_id_to_stream_map.get(stream_id)
        if stream is None:
            raise StateError(f"cannot complete unknown stream {stream_id!r}")
        if not stream.is_complete:
            raise StateError(
                f"cannot complete stream {stream_id!r} with {stream.remaining} of {stream.bytes_total} bytes left"
            )
        self._active_streams.remove(stream)
        del self._stream_id_to_stream_map[stream_id]
        if self._current_stream is stream:
            self._current_stream = None
        _log.debug("completed stream %r", stream_id)

    def _refresh_weight_table(self):
        if not self._strategy.is_weighted or len(self._active_streams) == 0:
            self._weight_table = None
        elif self._static_weight_table is None:
            requests = RequestSet((stream.stream_id, stream.priority.urgency) for stream in self._active_streams)
            self._weight_table = compute_weight_table(requests, self._strategy.alpha)
        else:
            active_shares = normalize(
                {stream.stream_id: self._static_weight_table.share(stream.stream_id) for stream in self._active_streams}
            )
            self._weight_table = WeightTable(
                alpha=self._static_weight_table.alpha,
                shares=active_shares,
                urgency_ratios=self._static_weight_table.urgency_ratios,
            )

    def next_allocation(self) -> Allocation:
        """
        The stream to send next and how many bytes it may send. The grant
        counts as sent right away.
        """
        if len(self._active_streams) == 0:
            raise NothingToSchedule("no active stream to schedule")
        kind = self._strategy.kind
        if kind == StrategyKind.weighted_incremental:
            return self._next_weighted_allocation()
        if kind == StrategyKind.sequential_fifo:
            stream = self._active_streams[0]
        elif kind == StrategyKind.sequential_by_urgency:
            stream = min(self._active_streams, key=lambda candidate: candidate.priority.urgency.level)
        else:
            assert kind == StrategyKind.round_robin
            stream = self._next_in_cycle(self._active_streams)
            self._last_served_arrival_index = stream.arrival_index
        return self._granted(stream, min(self._quantum.size_bytes, stream.remaining))

    def _granted(self, stream: StreamState, grant_bytes: int) -> Allocation:
        assert 0 < grant_bytes <= stream.remaining, f"stream={stream}, grant_bytes={grant_bytes}"
        stream.bytes_sent += grant_bytes
        return Allocation(stream.stream_id, grant_bytes, stream.is_complete)

    def _next_in_cycle(self, candidates: List[StreamState]) -> StreamState:
        assert len(candidates) >= 1
        if self._last_served_arrival_index is not None:
            for candidate in candidates:
                if candidate.arrival_index > self._last_served_arrival_index:
                    return candidate
        return candidates[0]

    def _exclusive_stream(self) -> Optional[StreamState]:
        non_incremental_streams = [stream for stream in self._active_streams if not stream.priority.incremental]
        if len(non_incremental_streams) == 0:
            return None
        # NOTE: min() returns the first of equally urgent streams, which is the earliest arrival.
        result = min(non_incremental_streams, key=lambda stream: stream.priority.urgency.level)
        has_more_urgent_incremental_stream = any(
            stream.priority.incremental and stream.priority.urgency < result.priority.urgency
            for stream in self._active_streams
        )
        return None if has_more_urgent_incremental_stream else result

    def _incremental_candidates(self) -> List[StreamState]:
        non_incremental_levels = [
            stream.priority.urgency.level for stream in self._active_streams if not stream.priority.incremental
        ]
        if len(non_incremental_levels) == 0:
            return self._active_streams
        level_limit = min(non_incremental_levels)
        return [
            stream
            for stream in self._active_streams
            if stream.priority.incremental and stream.priority.urgency.level < level_limit
        ]

    def _increment(self, stream: StreamState) -> float:
        assert self._weight_table is not None
        return self._quantum.size_bytes * len(self._active_streams) * self._weight_table.share(stream.stream_id)

    def _next_weighted_allocation(self) -> Allocation:
        exclusive_stream = self._exclusive_stream()
        if exclusive_stream is not None:
            return self._granted(exclusive_stream, min(self._quantum.size_bytes, exclusive_stream.remaining))

        candidates = self._incremental_candidates()
        assert len(candidates) >= 1
        stream = self._current_stream
        has_to_start_next_turn = (
            stream is None
            or not any(candidate is stream for candidate in candidates)
            or _whole_bytes(stream.deficit) < 1
        )
        if has_to_start_next_turn:
            stream = self._next_turn(candidates)
        grant_bytes = min(_whole_bytes(stream.deficit), stream.remaining, self._quantum.size_bytes)
        stream.deficit = max(0.0, stream.deficit - grant_bytes)
        result = self._granted(stream, grant_bytes)
        is_turn_continuing = not stream.is_complete and _whole_bytes(stream.deficit) >= 1
        self._current_stream = stream if is_turn_continuing else None
        return result

    def _next_turn(self, candidates: List[StreamState]) -> StreamState:
        # Every visit adds a positive increment, so some deficit eventually reaches a whole byte.
        while True:
            stream = self._next_in_cycle(candidates)
            self._last_served_arrival_index = stream.arrival_index
            stream.deficit += self._increment(stream)
            if _whole_bytes(stream.deficit) >= 1:
                return stream
