"""
Summaries of metrics over the iterations of a sweep and of improvements
over several sites.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import collections
import functools
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .common import mapped_repr
from .metrics import METRIC_NAMES, ComparisonCell, QoeReport

#: Possible ways to combine improvements of several sites.
AGGREGATES = ("mean", "median")

_AGGREGATE_TO_FUNCTION_MAP = {"mean": np.mean, "median": np.median}
assert set(_AGGREGATE_TO_FUNCTION_MAP.keys()) == set(AGGREGATES)


@functools.total_ordering
class MetricSummary:
    """
    Summary of the values of a single metric for a site and strategy over
    several iterations.
    """

    def __init__(self, site_name: str, strategy_label: str, metric_name: str):
        assert metric_name in METRIC_NAMES
        self._site_name = site_name
        self._strategy_label = strategy_label
        self._metric_name = metric_name
        self._values: List[float] = []
        self._absent_count = 0

    @property
    def site_name(self) -> str:
        return self._site_name

    @property
    def strategy_label(self) -> str:
        return self._strategy_label

    @property
    def metric_name(self) -> str:
        return self._metric_name

    @property
    def count(self) -> int:
        """number of iterations with a value for the metric"""
        return len(self._values)

    @property
    def absent_count(self) -> int:
        """number of iterations without a value, for example a TTI on a page without scripts"""
        return self._absent_count

    @property
    def mean(self) -> Optional[float]:
        """mean over all iterations, or ``None`` if the metric was absent in any of them"""
        if self.count == 0 or self.absent_count >= 1:
            return None
        return float(np.mean(self._values))

    @property
    def std(self) -> Optional[float]:
        """sample standard deviation over all iterations, 0 for a single iteration"""
        if self.mean is None:
            return None
        return float(np.std(self._values, ddof=1)) if self.count >= 2 else 0.0

    def add(self, value: Optional[float]) -> None:
        if value is None:
            self._absent_count += 1
        else:
            self._values.append(value)

    def sort_key(self) -> Hashable:
        return self.site_name, self.strategy_label, METRIC_NAMES.index(self.metric_name)

    def __eq__(self, other):
        return self.sort_key() == other.sort_key()

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        return mapped_repr(
            self,
            {
                "site_name": repr(self.site_name),
                "strategy_label": repr(self.strategy_label),
                "metric_name": repr(self.metric_name),
                "count": self.count,
                "mean": self.mean,
            },
        )


class SweepSummary:
    """
    Summary of the :py:class:`QoeReport` of all runs of a sweep, grouped by
    site and strategy.
    """

    def __init__(self):
        self._key_to_metric_summary_map: Dict[Tuple[str, str, str], MetricSummary] = {}
        self._site_names: List[str] = []
        self._strategy_labels: List[str] = []
        self._run_count = 0

    @property
    def run_count(self) -> int:
        return self._run_count

    @property
    def site_names(self) -> List[str]:
        """site names in the order they were added first"""
        return list(self._site_names)

    @property
    def strategy_labels(self) -> List[str]:
        """strategy labels in the order they were added first"""
        return list(self._strategy_labels)

    def add(self, site_name: str, strategy_label: str, report: QoeReport) -> None:
        self._run_count += 1
        if site_name not in self._site_names:
            self._site_names.append(site_name)
        if strategy_label not in self._strategy_labels:
            self._strategy_labels.append(strategy_label)
        for metric_name in METRIC_NAMES:
            key = (site_name, strategy_label, metric_name)
            metric_summary = self._key_to_metric_summary_map.get(key)
            if metric_summary is None:
                metric_summary = MetricSummary(site_name, strategy_label, metric_name)
                self._key_to_metric_summary_map[key] = metric_summary
            metric_summary.add(report.metric(metric_name))

    def metric_summary(self, site_name: str, strategy_label: str, metric_name: str) -> MetricSummary:
        return self._key_to_metric_summary_map[(site_name, strategy_label, metric_name)]

    def metric_summaries(self) -> List[MetricSummary]:
        return sorted(self._key_to_metric_summary_map.values())

    def mean_report(self, site_name: str, strategy_label: str) -> QoeReport:
        """
        Report with the mean of every metric over all iterations of
        ``strategy_label`` on ``site_name``.
        """
        name_to_mean_map = {
            metric_name: self.metric_summary(site_name, strategy_label, metric_name).mean
            for metric_name in METRIC_NAMES
        }
        return QoeReport(**name_to_mean_map)

    def __repr__(self):
        return mapped_repr(
            self, {"run_count": self.run_count, "sites": self.site_names, "strategies": self.strategy_labels}
        )


def aggregated_improvements(
    site_to_cells_map: Mapping[str, Sequence[ComparisonCell]], aggregate: str = "mean"
) -> List[ComparisonCell]:
    """
    Combine the improvement cells of several sites into one cell per metric
    and variant, using the mean or median of the per site values. Metrics
    and variants missing for some sites are combined over the sites that
    have them.
    """
    assert aggregate in AGGREGATES, f"aggregate={aggregate!r}"
    aggregate_function = _AGGREGATE_TO_FUNCTION_MAP[aggregate]
    key_to_cells_map: Dict[Tuple[str, str], List[ComparisonCell]] = collections.defaultdict(list)
    for cells in site_to_cells_map.values():
        for cell in cells:
            key_to_cells_map[(cell.metric_name, cell.variant_label)].append(cell)

    def cell_order(key: Tuple[str, str]) -> Tuple[int, int]:
        # Keep the order of the first site listing the metric and variant.
        metric_name, variant_label = key
        return METRIC_NAMES.index(metric_name), variant_labels.index(variant_label)

    variant_labels = []
    for _, variant_label in key_to_cells_map:
        if variant_label not in variant_labels:
            variant_labels.append(variant_label)
    result = []
    for key in sorted(key_to_cells_map.keys(), key=cell_order):
        cells = key_to_cells_map[key]
        metric_name, variant_label = key
        result.append(
            ComparisonCell(
                metric_name=metric_name,
                variant_label=variant_label,
                baseline_value=float(aggregate_function([cell.baseline_value for cell in cells])),
                variant_value=float(aggregate_function([cell.variant_value for cell in cells])),
                improvement_pct=float(aggregate_function([cell.improvement_pct for cell in cells])),
            )
        )
    return result
