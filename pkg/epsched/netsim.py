"""
Deterministic discrete-event simulation of resource delivery over a single
link with a fixed bandwidth, a one-way delay and random packet loss.

The link is a fixed rate pipe without congestion control: the server sends
one grant of the scheduler at a time, each grant occupies the link for
``size / bandwidth`` and arrives at the client one one-way delay later
unless it is lost, in which case it is sent again one round trip later.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import collections
import csv
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Mapping, NamedTuple, Optional, TextIO, Tuple

import numpy as np
import simpy

from .common import InputError, RangeError, mapped_repr
from .manifest import Resource, ResourceManifest
from .scheduler import Quantum, StreamCompleted, StreamOpened, StreamScheduler, StreamState, Strategy, StrategyKind
from .weights import RequestSet

#: Default bandwidth of the simulated link, which is a placeholder for an unstated testbed.
DEFAULT_BANDWIDTH = 10_000_000

#: Default delay in each direction in milliseconds.
DEFAULT_ONE_WAY_DELAY = 10.0

#: Default probability of a packet getting lost.
DEFAULT_LOSS_RATE = 0.0005

_MAX_SEED = 2**64
_TRACE_CSV_HEADER = ["time_ms", "stream_id", "kind", "bytes"]

_log = logging.getLogger("epsched")


@dataclass(frozen=True)
class LinkParams:
    """
    Characteristics of the simulated link and the seed for its loss
    generator.
    """

    bandwidth_bytes_per_sec: int = DEFAULT_BANDWIDTH
    one_way_delay_ms: float = DEFAULT_ONE_WAY_DELAY
    loss_rate: float = DEFAULT_LOSS_RATE
    seed: int = 0

    def __post_init__(self):
        bandwidth = self.bandwidth_bytes_per_sec
        if isinstance(bandwidth, bool) or not isinstance(bandwidth, int) or bandwidth <= 0:
            raise RangeError(f"bandwidth must be a positive number of bytes per second but is {bandwidth!r}")
        # NOTE: NaN fails the comparisons below and is rejected too.
        if not self.one_way_delay_ms >= 0:
            raise RangeError(f"one way delay is {self.one_way_delay_ms} ms but must be at least 0")
        if not 0.0 <= self.loss_rate < 1.0:
            raise RangeError(f"loss rate is {self.loss_rate} but must be at least 0 and less than 1")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < _MAX_SEED:
            raise RangeError(f"seed must be a 64 bit unsigned integer but is {self.seed!r}")

    @property
    def round_trip_time_ms(self) -> float:
        return 2 * self.one_way_delay_ms

    def serialization_time_ms(self, size_bytes: int) -> float:
        return size_bytes * 1000.0 / self.bandwidth_bytes_per_sec


class EventKind(Enum):
    """
    Kinds of events in a :py:class:`DeliveryTrace`, in the order events
    that happen at the same time for the same stream are listed.
    """

    request_issued = "RequestIssued"
    grant_sent = "GrantSent"
    retransmission = "Retransmission"
    packet_lost = "PacketLost"
    resource_complete = "ResourceComplete"


_EVENT_KIND_TO_ORDER_MAP = {event_kind: order for order, event_kind in enumerate(EventKind)}


class TraceEvent(NamedTuple):
    time_ms: float
    stream_id: str
    kind: EventKind
    #: bytes sent or lost, the resource size for completions and 0 for requests
    bytes: int = 0


def _event_sort_key(event: TraceEvent) -> Tuple[float, str, int]:
    return event.time_ms, event.stream_id, _EVENT_KIND_TO_ORDER_MAP[event.kind]


@dataclass(frozen=True)
class DeliveryTrace:
    """
    Time ordered record of everything that happened during a single
    simulation run.
    """

    site_name: str
    strategy: Strategy
    quantum: Quantum
    link: LinkParams
    events: Tuple[TraceEvent, ...]
    static_weights: bool = False

    @property
    def completion_times(self) -> Dict[str, float]:
        """time in milliseconds at which each resource arrived completely"""
        return {
            event.stream_id: event.time_ms for event in self.events if event.kind == EventKind.resource_complete
        }

    def completion_time(self, stream_id: str) -> float:
        return self.completion_times[stream_id]

    def events_of_kind(self, kind: EventKind) -> List[TraceEvent]:
        return [event for event in self.events if event.kind == kind]

    def granted_bytes(self) -> Dict[str, int]:
        """bytes granted to each stream without retransmissions"""
        result: Dict[str, int] = collections.defaultdict(int)
        for event in self.events:
            if event.kind == EventKind.grant_sent:
                result[event.stream_id] += event.bytes
        return dict(result)

    def header_map(self) -> Dict[str, object]:
        return {
            "site_name": self.site_name,
            "strategy": self.strategy.kind.value,
            "alpha": self.strategy.alpha,
            "static_weights": self.static_weights,
            "quantum": self.quantum.size_bytes,
            "bandwidth_bytes_per_sec": self.link.bandwidth_bytes_per_sec,
            "one_way_delay_ms": self.link.one_way_delay_ms,
            "loss_rate": self.link.loss_rate,
            "seed": self.link.seed,
        }

    def __repr__(self):
        return mapped_repr(
            self,
            {
                "site_name": repr(self.site_name),
                "strategy": self.strategy.label,
                "seed": self.link.seed,
                "event_count": len(self.events),
            },
        )


class _Packet(NamedTuple):
    stream_id: str
    size_bytes: int


class _LinkSimulation:
    def __init__(
        self,
        manifest: ResourceManifest,
        link: LinkParams,
        strategy: Strategy,
        quantum: Quantum,
        static_weights: bool,
    ):
        self._manifest = manifest
        self._link = link
        static_requests = (
            RequestSet((resource.resource_id, resource.urgency) for resource in manifest.resources)
            if static_weights
            else None
        )
        self._scheduler = StreamScheduler(strategy, quantum, static_requests)
        self._random_generator = np.random.default_rng(link.seed)
        self._env = simpy.Environment()
        self._events: List[TraceEvent] = []
        self._retransmission_queue: Deque[_Packet] = collections.deque()
        self._stream_id_to_arrived_bytes_map: Dict[str, int] = collections.defaultdict(int)
        self._wakeup: Optional[simpy.Event] = None
        self._completed_count = 0

    def run(self) -> List[TraceEvent]:
        for resource in self._manifest.roots():
            self._issue_request(resource)
        self._env.process(self._transmit())
        # The transmit process eventually waits for a wakeup that never comes, which ends the run.
        self._env.run()
        assert self._completed_count == len(self._manifest.resources), (
            f"only {self._completed_count} of {len(self._manifest.resources)} resources completed"
        )
        return sorted(self._events, key=_event_sort_key)

    def _record(self, kind: EventKind, stream_id: str, size_bytes: int = 0):
        self._events.append(TraceEvent(float(self._env.now), stream_id, kind, size_bytes))

    def _notify(self):
        if self._wakeup is not None and not self._wakeup.triggered:
            self._wakeup.succeed()

    def _issue_request(self, resource: Resource):
        self._record(EventKind.request_issued, resource.resource_id)
        self._env.process(self._send_request(resource))

    def _send_request(self, resource: Resource):
        yield self._env.timeout(self._link.one_way_delay_ms)
        stream = StreamState(
            stream_id=resource.resource_id,
            priority=resource.priority,
            bytes_total=resource.size_bytes,
            opened_at=float(self._env.now),
            arrival_index=self._manifest.arrival_index(resource.resource_id),
        )
        self._scheduler.on_stream_event(StreamOpened(stream))
        self._notify()

    def _is_lost(self) -> bool:
        # No random numbers are drawn on a loss free link.
        return self._link.loss_rate > 0 and self._random_generator.random() < self._link.loss_rate

    def _transmit(self):
        while True:
            if len(self._retransmission_queue) >= 1:
                packet = self._retransmission_queue.popleft()
                self._record(EventKind.retransmission, packet.stream_id, packet.size_bytes)
            elif self._scheduler.has_active_streams:
                allocation = self._scheduler.next_allocation()
                if allocation.is_final:
                    self._scheduler.on_stream_event(StreamCompleted(allocation.stream_id))
                packet = _Packet(allocation.stream_id, allocation.grant_bytes)
                self._record(EventKind.grant_sent, packet.stream_id, packet.size_bytes)
            else:
                self._wakeup = self._env.event()
                yield self._wakeup
                continue
            yield self._env.timeout(self._link.serialization_time_ms(packet.size_bytes))
            if self._is_lost():
                self._record(EventKind.packet_lost, packet.stream_id, packet.size_bytes)
                self._env.process(self._retransmit_later(packet))
            else:
                self._env.process(self._deliver(packet))

    def _retransmit_later(self, packet: _Packet):
        yield self._env.timeout(self._link.round_trip_time_ms)
        self._retransmission_queue.append(packet)
        self._notify()

    def _deliver(self, packet: _Packet):
        yield self._env.timeout(self._link.one_way_delay_ms)
        resource = self._manifest.resource(packet.stream_id)
        self._stream_id_to_arrived_bytes_map[packet.stream_id] += packet.size_bytes
        arrived_bytes = self._stream_id_to_arrived_bytes_map[packet.stream_id]
        assert arrived_bytes <= resource.size_bytes
        if arrived_bytes == resource.size_bytes:
            self._record(EventKind.resource_complete, resource.resource_id, resource.size_bytes)
            self._completed_count += 1
            for dependent in self._manifest.dependents(resource.resource_id):
                self._issue_request(dependent)


def simulate(
    manifest: ResourceManifest,
    link: LinkParams,
    strategy: Strategy,
    quantum: Optional[Quantum] = None,
    static_weights: bool = False,
) -> DeliveryTrace:
    """
    Simulate the delivery of all resources of ``manifest`` over ``link``
    with the scheduling ``strategy``.

    Requests for root resources are issued at 0 ms, requests for resources
    discovered after another one as soon as it has arrived completely. Equal
    ``link.seed`` values yield identical traces.

    :param static_weights: compute the shares once over all resources of
      the manifest instead of over the currently active streams
    """
    if quantum is None:
        quantum = Quantum()
    events = _LinkSimulation(manifest, link, strategy, quantum, static_weights).run()
    result = DeliveryTrace(manifest.site_name, strategy, quantum, link, tuple(events), static_weights)
    _log.info(
        "%s: simulated %s with seed %d: %d events", manifest.site_name, strategy.label, link.seed, len(events)
    )
    return result


def replay_check(trace: DeliveryTrace, manifest: ResourceManifest) -> List[str]:
    """
    Violations of the trace invariants, which is empty for a valid trace.
    """
    result = []
    previous_time = None
    for index, event in enumerate(trace.events):
        if event.time_ms < 0:
            result.append(f"negative time at event {index}: {event.time_ms} ms")
        if previous_time is not None and event.time_ms < previous_time:
            result.append(f"time regression at event {index}: {event.time_ms} ms after {previous_time} ms")
        previous_time = event.time_ms

    resource_ids = {resource.resource_id for resource in manifest.resources}
    unknown_stream_ids = sorted({event.stream_id for event in trace.events} - resource_ids)
    result.extend(f"unknown stream {stream_id}" for stream_id in unknown_stream_ids)

    stream_id_to_granted_bytes_map = trace.granted_bytes()
    stream_id_to_completion_count_map = collections.Counter(
        event.stream_id for event in trace.events if event.kind == EventKind.resource_complete
    )
    for resource in manifest.resources:
        granted_bytes = stream_id_to_granted_bytes_map.get(resource.resource_id, 0)
        if granted_bytes != resource.size_bytes:
            result.append(
                f"bytes mismatch for {resource.resource_id}: {granted_bytes} of {resource.size_bytes} bytes granted"
            )
        completion_count = stream_id_to_completion_count_map[resource.resource_id]
        if completion_count == 0:
            result.append(f"missing completion for {resource.resource_id}")
        elif completion_count >= 2:
            result.append(f"duplicate completion for {resource.resource_id}: {completion_count} completions")
    return result


def write_trace_csv(trace: DeliveryTrace, target_stream: TextIO) -> None:
    """
    Write ``trace`` as CSV with one row per event, preceded by a comment
    line with the JSON encoded link parameters, strategy and seed.
    """
    target_stream.write(f"# {json.dumps(trace.header_map())}\n")
    csv_writer = csv.writer(target_stream, lineterminator="\n")
    csv_writer.writerow(_TRACE_CSV_HEADER)
    for event in trace.events:
        csv_writer.writerow([repr(event.time_ms), event.stream_id, event.kind.value, event.bytes])


def _trace_header_from(header_line: str) -> Mapping[str, object]:
    if not header_line.startswith("# "):
        raise InputError(f"trace must start with a header comment: {header_line!r}")
    try:
        result = json.loads(header_line[2:])
    except json.JSONDecodeError as error:
        raise InputError(f"cannot parse trace header: {error}") from error
    if not isinstance(result, dict):
        raise InputError(f"trace header must be a JSON object: {header_line!r}")
    return result


def read_trace_csv(source_stream: TextIO) -> DeliveryTrace:
    """
    Read a trace written by :py:func:`write_trace_csv`.
    """
    header = _trace_header_from(source_stream.readline().rstrip("\n"))
    try:
        strategy = Strategy(StrategyKind(header["strategy"]), header["alpha"])
        quantum = Quantum(header["quantum"])
        link = LinkParams(
            bandwidth_bytes_per_sec=header["bandwidth_bytes_per_sec"],
            one_way_delay_ms=header["one_way_delay_ms"],
            loss_rate=header["loss_rate"],
            seed=header["seed"],
        )
        site_name = str(header["site_name"])
        static_weights = bool(header.get("static_weights", False))
    except (KeyError, ValueError, RangeError) as error:
        raise InputError(f"trace header is incomplete or invalid: {error}") from error

    csv_reader = csv.reader(source_stream)
    column_names = next(csv_reader, None)
    if column_names != _TRACE_CSV_HEADER:
        raise InputError(f"trace columns must be {','.join(_TRACE_CSV_HEADER)} but are: {column_names}")
    events = []
    for row_number, row in enumerate(csv_reader, start=3):
        try:
            time_text, stream_id, kind_text, bytes_text = row
            events.append(TraceEvent(float(time_text), stream_id, EventKind(kind_text), int(bytes_text)))
        except ValueError as error:
            raise InputError(f"line {row_number}: cannot parse trace event {row}: {error}") from error
    return DeliveryTrace(site_name, strategy, quantum, link, tuple(events), static_weights)
