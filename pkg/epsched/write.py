"""
Writers to store the results of an epsched sweep.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import csv
from typing import List, Optional, Sequence, TextIO

from rich.console import Console
from rich.table import Table

from .metrics import METRIC_NAMES, ComparisonCell, QoeReport
from .scheduler import Strategy
from .summary import SweepSummary

_METRIC_NAME_TO_TITLE_MAP = {
    "proxy_fcp_ms": "FCP",
    "proxy_lcp_ms": "LCP",
    "proxy_tti_ms": "TTI",
    "page_complete_ms": "Page",
    "mean_completion_ms": "Mean",
    "median_completion_ms": "Median",
}
assert set(_METRIC_NAME_TO_TITLE_MAP.keys()) == set(METRIC_NAMES)


def formatted_number(value: Optional[float]) -> str:
    """
    ``value`` with six decimals for CSV files, or an empty text for absent
    values.
    """
    return f"{value:.6f}" if value is not None else ""


def formatted_alpha(strategy: Strategy) -> str:
    return f"{strategy.alpha:g}" if strategy.alpha is not None else ""


class BaseWriter:
    """
    Base for writers to ``target_stream`` that are used as context manager
    and only get closed, which finishes their output, if no error occurred.
    """

    def __init__(self, target_stream: TextIO):
        self._target_stream = target_stream

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            self.close()
        return False

    def close(self):
        pass


class ReportCsvWriter(BaseWriter):
    """
    Writer for one CSV row per metric of every simulation run.
    """

    def __init__(self, target_stream: TextIO):
        super().__init__(target_stream)
        self._csv_writer = csv.writer(target_stream, lineterminator="\n")
        self._csv_writer.writerow(["site", "strategy", "alpha", "seed", "metric", "value"])

    def add(self, site_name: str, strategy: Strategy, seed: int, report: QoeReport):
        for metric_name in METRIC_NAMES:
            self._csv_writer.writerow(
                [
                    site_name,
                    strategy.kind.value,
                    formatted_alpha(strategy),
                    seed,
                    metric_name,
                    formatted_number(report.metric(metric_name)),
                ]
            )


class StatisticsCsvWriter(BaseWriter):
    """
    Writer for the mean and standard deviation of every metric over the
    iterations of each site and strategy.
    """

    def __init__(self, target_stream: TextIO, sweep_summary: SweepSummary):
        super().__init__(target_stream)
        self._sweep_summary = sweep_summary

    def close(self):
        super().close()
        csv_writer = csv.writer(self._target_stream, lineterminator="\n")
        csv_writer.writerow(["site", "strategy", "metric", "count", "absent_count", "mean", "std"])
        for metric_summary in self._sweep_summary.metric_summaries():
            csv_writer.writerow(
                [
                    metric_summary.site_name,
                    metric_summary.strategy_label,
                    metric_summary.metric_name,
                    metric_summary.count,
                    metric_summary.absent_count,
                    formatted_number(metric_summary.mean),
                    formatted_number(metric_summary.std),
                ]
            )


class ImprovementCsvWriter(BaseWriter):
    """
    Writer for a matrix of improvements in percent with one row per metric
    and one column per variant, ready to be plotted as heat map.
    """

    def __init__(self, target_stream: TextIO, variant_labels: Sequence[str]):
        super().__init__(target_stream)
        self._variant_labels = list(variant_labels)
        self._cells: List[ComparisonCell] = []

    def add(self, cell: ComparisonCell):
        assert cell.variant_label in self._variant_labels, f"cell={cell}"
        self._cells.append(cell)

    def close(self):
        super().close()
        csv_writer = csv.writer(self._target_stream, lineterminator="\n")
        csv_writer.writerow(["metric", *self._variant_labels])
        for metric_name in METRIC_NAMES:
            variant_label_to_cell_map = {
                cell.variant_label: cell for cell in self._cells if cell.metric_name == metric_name
            }
            if len(variant_label_to_cell_map) >= 1:
                csv_writer.writerow(
                    [
                        metric_name,
                        *[
                            formatted_number(
                                variant_label_to_cell_map[variant_label].improvement_pct
                                if variant_label in variant_label_to_cell_map
                                else None
                            )
                            for variant_label in self._variant_labels
                        ],
                    ]
                )


class SummaryWriter(BaseWriter):
    """
    Writer to summarize the mean metrics per site and strategy and the
    improvements over the baseline in a format that can easily be read by
    humans.
    """

    def __init__(self, target_stream: TextIO, sweep_summary: SweepSummary, aggregated_cells: Sequence[ComparisonCell]):
        super().__init__(target_stream)
        self._sweep_summary = sweep_summary
        self._aggregated_cells = list(aggregated_cells)

    def _metrics_table(self) -> Table:
        table = Table(title="Mean time in ms")
        table.add_column("Site", justify="left", overflow="fold")
        table.add_column("Strategy", justify="left", overflow="fold")
        for metric_name in METRIC_NAMES:
            table.add_column(_METRIC_NAME_TO_TITLE_MAP[metric_name], justify="right")
        site_names = self._sweep_summary.site_names
        for site_index, site_name in enumerate(site_names, start=1):
            strategy_labels = self._sweep_summary.strategy_labels
            for strategy_index, strategy_label in enumerate(strategy_labels, start=1):
                mean_report = self._sweep_summary.mean_report(site_name, strategy_label)
                table.add_row(
                    site_name if strategy_index == 1 else "",
                    strategy_label,
                    *[formatted_milliseconds(mean_report.metric(metric_name)) for metric_name in METRIC_NAMES],
                    end_section=(strategy_index == len(strategy_labels) and site_index != len(site_names)),
                )
        return table

    def _improvements_table(self) -> Table:
        variant_labels = []
        for cell in self._aggregated_cells:
            if cell.variant_label not in variant_labels:
                variant_labels.append(cell.variant_label)
        table = Table(title="Improvement over baseline in %")
        table.add_column("Metric", justify="left")
        for variant_label in variant_labels:
            table.add_column(variant_label, justify="right")
        for metric_name in METRIC_NAMES:
            variant_label_to_cell_map = {
                cell.variant_label: cell for cell in self._aggregated_cells if cell.metric_name == metric_name
            }
            if len(variant_label_to_cell_map) >= 1:
                table.add_row(
                    _METRIC_NAME_TO_TITLE_MAP[metric_name],
                    *[
                        formatted_percentage(variant_label_to_cell_map[variant_label].improvement_pct)
                        if variant_label in variant_label_to_cell_map
                        else "-"
                        for variant_label in variant_labels
                    ],
                )
        return table

    def close(self):
        super().close()
        console = Console(file=self._target_stream, soft_wrap=True)
        console.print(self._metrics_table())
        if len(self._aggregated_cells) >= 1:
            console.print(self._improvements_table())


def formatted_milliseconds(value: Optional[float]) -> str:
    return f"{value:.1f}" if value is not None else "-"


def formatted_percentage(percentage: float) -> str:
    return f"{percentage:+.1f}"
