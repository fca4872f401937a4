"""
Proxy QoE metrics derived from delivery traces and their improvement over a
baseline strategy.

The proxies stand in for the browser measured metrics of the same name:
"first contentful paint" is when the last render critical resource arrived,
"largest contentful paint" is when the LCP candidate arrived and "time to
interactive" is when the last script arrived. Layout and main thread
metrics like CLS, speed index or total blocking time have no delivery
analogue and are not reported.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .common import InputError
from .manifest import ResourceManifest, RoleFlag
from .netsim import DeliveryTrace

#: Names of all metrics of a :py:class:`QoeReport` in the order they are reported.
METRIC_NAMES = (
    "proxy_fcp_ms",
    "proxy_lcp_ms",
    "proxy_tti_ms",
    "page_complete_ms",
    "mean_completion_ms",
    "median_completion_ms",
)

_log = logging.getLogger("epsched")


@dataclass(frozen=True)
class QoeReport:
    """
    Proxy QoE metrics of a single simulation run in milliseconds; metrics
    that depend on a role flag no resource has are ``None``.
    """

    proxy_fcp_ms: Optional[float]
    proxy_lcp_ms: Optional[float]
    proxy_tti_ms: Optional[float]
    page_complete_ms: float
    mean_completion_ms: float
    median_completion_ms: float

    def metric(self, metric_name: str) -> Optional[float]:
        assert metric_name in METRIC_NAMES, f"metric_name={metric_name!r}"
        return getattr(self, metric_name)

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


@dataclass(frozen=True)
class ComparisonCell:
    """
    Improvement of a single metric of a variant over the baseline; positive
    percentages mean the variant is faster.
    """

    metric_name: str
    variant_label: str
    baseline_value: float
    variant_value: float
    improvement_pct: float


def improvement_pct(baseline_value: float, variant_value: float) -> float:
    assert baseline_value > 0, f"baseline_value={baseline_value}"
    return (baseline_value - variant_value) / baseline_value * 100.0


def _latest_completion(completion_times: Mapping[str, float], resource_ids: Sequence[str]) -> Optional[float]:
    return max(completion_times[resource_id] for resource_id in resource_ids) if len(resource_ids) >= 1 else None


def derive_report(trace: DeliveryTrace, manifest: ResourceManifest) -> QoeReport:
    """
    The :py:class:`QoeReport` for the completion times in ``trace``.
    """
    if trace.site_name != manifest.site_name:
        raise InputError(f"trace of site {trace.site_name!r} does not belong to manifest of {manifest.site_name!r}")
    completion_times = trace.completion_times
    resource_ids = [resource.resource_id for resource in manifest.resources]
    missing_resource_ids = [resource_id for resource_id in resource_ids if resource_id not in completion_times]
    if len(missing_resource_ids) >= 1:
        raise InputError(f"{manifest.site_name}: trace lacks completions of resources: {missing_resource_ids}")
    unknown_resource_ids = sorted(set(completion_times.keys()) - set(resource_ids))
    if len(unknown_resource_ids) >= 1:
        raise InputError(f"{manifest.site_name}: trace contains unknown resources: {unknown_resource_ids}")

    def resource_ids_with(role_flag: RoleFlag) -> List[str]:
        return [resource.resource_id for resource in manifest.resources if resource.has_role(role_flag)]

    completions = np.array([completion_times[resource_id] for resource_id in resource_ids], dtype=np.float64)
    return QoeReport(
        proxy_fcp_ms=_latest_completion(completion_times, resource_ids_with(RoleFlag.render_critical)),
        proxy_lcp_ms=_latest_completion(completion_times, resource_ids_with(RoleFlag.lcp_candidate)),
        proxy_tti_ms=_latest_completion(completion_times, resource_ids_with(RoleFlag.script)),
        page_complete_ms=float(completions.max()),
        mean_completion_ms=float(completions.mean()),
        # NOTE: For an even number of completions, this is the midpoint of the two middle values.
        median_completion_ms=float(np.median(completions)),
    )


def improvement_table(
    baseline: QoeReport, variants: Mapping[str, QoeReport], metric_names: Sequence[str] = METRIC_NAMES
) -> List[ComparisonCell]:
    """
    One :py:class:`ComparisonCell` for each metric and variant, ordered by
    metric and then by variant. Cells for which the baseline or variant
    lacks a value are skipped with a warning.
    """
    result = []
    for metric_name in metric_names:
        baseline_value = baseline.metric(metric_name)
        if baseline_value is None or baseline_value <= 0:
            _log.warning("skipping %s because the baseline has no positive value: %s", metric_name, baseline_value)
            continue
        for variant_label, variant in variants.items():
            variant_value = variant.metric(metric_name)
            if variant_value is None:
                _log.warning("skipping %s of %s because it has no value", metric_name, variant_label)
                continue
            result.append(
                ComparisonCell(
                    metric_name=metric_name,
                    variant_label=variant_label,
                    baseline_value=baseline_value,
                    variant_value=variant_value,
                    improvement_pct=improvement_pct(baseline_value, variant_value),
                )
            )
    return result
