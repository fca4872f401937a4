"""
Bandwidth shares for concurrent requests computed from their EPS urgency.

The initial weight of request *i* is
``alpha / (u_i + r_u) + (1 - alpha) / n`` where ``u_i`` is its urgency level,
``r_u`` the fraction of requests sharing that level and ``n`` the number of
requests. Shares are the initial weights normalized to a sum of 1.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import collections
import math
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Mapping, Tuple, Union

from .common import EmptySetError, InvariantError, RangeError, mapped_repr
from .priority import Urgency

#: Tolerance for the sum of all shares in a :py:class:`WeightTable`.
SHARE_SUM_TOLERANCE = 1e-9

StreamId = Hashable


def validated_alpha(alpha: float) -> float:
    """
    ``alpha`` as float after checking it is between 0 and 1.
    """
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        raise RangeError(f"alpha must be a number between 0 and 1 but is {alpha!r}")
    # NOTE: NaN fails the comparison and is rejected too.
    if not 0.0 <= alpha <= 1.0:
        raise RangeError(f"alpha is {alpha} but must be between 0 and 1")
    return float(alpha)


def _urgency_from(urgency_or_level: Union[Urgency, int]) -> Urgency:
    return urgency_or_level if isinstance(urgency_or_level, Urgency) else Urgency(urgency_or_level)


class RequestSet:
    """
    Ordered set of concurrent requests, each identified by a unique stream
    id and having an urgency.
    """

    def __init__(self, entries: Iterable[Tuple[StreamId, Union[Urgency, int]]] = ()):
        self._entries: List[Tuple[StreamId, Urgency]] = []
        stream_ids = set()
        for stream_id, urgency_or_level in entries:
            if stream_id in stream_ids:
                raise InvariantError(f"stream id must be unique: {stream_id!r}")
            stream_ids.add(stream_id)
            self._entries.append((stream_id, _urgency_from(urgency_or_level)))

    @staticmethod
    def from_levels(urgency_levels: Iterable[int]) -> "RequestSet":
        """
        Request set with stream ids 0, 1, 2... having the respective
        ``urgency_levels``.
        """
        return RequestSet(enumerate(urgency_levels))

    @property
    def entries(self) -> Tuple[Tuple[StreamId, Urgency], ...]:
        return tuple(self._entries)

    @property
    def n(self) -> int:
        """number of requests"""
        return len(self._entries)

    def __len__(self):
        return self.n

    def __repr__(self):
        return mapped_repr(
            self, {"entries": [f"{stream_id!r}:u{urgency.level}" for stream_id, urgency in self._entries]}
        )


@dataclass(frozen=True)
class WeightTable:
    """
    Immutable snapshot of the bandwidth shares of a request set for a
    certain ``alpha``.
    """

    alpha: float
    shares: Mapping[StreamId, float]
    urgency_ratios: Mapping[int, float]

    def share(self, stream_id: StreamId) -> float:
        return self.shares[stream_id]


def urgency_ratio(requests: RequestSet, urgency: Union[Urgency, int]) -> float:
    """
    Fraction of ``requests`` that have urgency ``urgency``.
    """
    if requests.n == 0:
        raise EmptySetError("request set must contain at least one request to compute an urgency ratio")
    level = _urgency_from(urgency).level
    matching_count = sum(1 for _, request_urgency in requests.entries if request_urgency.level == level)
    return matching_count / requests.n


def initial_weight(urgency: Union[Urgency, int], ratio: float, alpha: float, n: int) -> float:
    """
    Initial, not yet normalized weight of a request with ``urgency`` where
    ``ratio`` is the fraction of the ``n`` requests sharing its urgency level.
    """
    alpha = validated_alpha(alpha)
    if n < 1:
        raise InvariantError(f"number of requests is {n} but must be at least 1")
    # NOTE: NaN fails the comparison and is rejected too.
    if not ratio > 0:
        raise InvariantError(f"urgency ratio is {ratio} but must be greater than 0")
    level = _urgency_from(urgency).level
    return alpha * (1.0 / (level + ratio)) + (1.0 - alpha) * (1.0 / n)


def normalize(initial_weights: Mapping[StreamId, float]) -> Dict[StreamId, float]:
    """
    Shares proportional to ``initial_weights`` that sum up to 1.
    """
    if len(initial_weights) == 0:
        raise EmptySetError("weights to normalize must contain at least one entry")
    for stream_id, weight in initial_weights.items():
        if not weight > 0:
            raise InvariantError(f"weight of stream {stream_id!r} is {weight} but must be greater than 0")
    weights = list(initial_weights.values())
    if all(weight == weights[0] for weight in weights):
        # Identical weights yield exactly uniform shares.
        uniform_share = 1.0 / len(weights)
        return {stream_id: uniform_share for stream_id in initial_weights}
    total_weight = math.fsum(weights)
    return {stream_id: weight / total_weight for stream_id, weight in initial_weights.items()}


def compute_weight_table(requests: RequestSet, alpha: float) -> WeightTable:
    """
    The :py:class:`WeightTable` for ``requests`` and weight factor ``alpha``.
    """
    alpha = validated_alpha(alpha)
    if requests.n == 0:
        raise EmptySetError("request set must contain at least one request to compute weights")
    level_to_count_map = collections.Counter(urgency.level for _, urgency in requests.entries)
    urgency_ratios = {level: count / requests.n for level, count in sorted(level_to_count_map.items())}
    initial_weights = {
        stream_id: initial_weight(urgency, urgency_ratios[urgency.level], alpha, requests.n)
        for stream_id, urgency in requests.entries
    }
    shares = normalize(initial_weights)
    assert abs(math.fsum(shares.values()) - 1.0) <= SHARE_SUM_TOLERANCE
    return WeightTable(alpha=alpha, shares=shares, urgency_ratios=urgency_ratios)
