"""
Experiment sweeps that simulate every combination of manifest, strategy,
alpha and iteration and store the results as CSV files.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import concurrent.futures
import dataclasses
import io
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

from rich.console import Console
from rich.progress import Progress
from rich.table import Table

from .common import Error, OptionError
from .manifest import ResourceManifest, RoleFlag, load_manifest
from .metrics import ComparisonCell, QoeReport, derive_report, improvement_table
from .netsim import DeliveryTrace, LinkParams, replay_check, simulate, write_trace_csv
from .scheduler import Quantum, Strategy, StrategyKind
from .summary import AGGREGATES, SweepSummary, aggregated_improvements
from .weights import validated_alpha
from .write import ImprovementCsvWriter, ReportCsvWriter, StatisticsCsvWriter

#: Values for alpha from no urgency influence at all to urgency only.
DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)

DEFAULT_ITERATIONS = 10

DEFAULT_STRATEGY_KINDS = (StrategyKind.sequential_fifo, StrategyKind.round_robin, StrategyKind.weighted_incremental)

DEFAULT_BASELINE_KIND = StrategyKind.sequential_fifo

TRACES_FOLDER_NAME = "traces"
REPORT_NAME = "report.csv"
STATISTICS_NAME = "statistics.csv"
IMPROVEMENT_NAME = "improvement.csv"

_MAX_SEED = 2**64
_UNSAFE_FILE_NAME_CHARACTERS_REGEX = re.compile(r"[^A-Za-z0-9_.\-]+")

_log = logging.getLogger("epsched")


@dataclass(frozen=True)
class ExperimentPlan:
    """
    Everything needed to run a sweep. The baseline strategy is always part
    of the strategies, and each iteration uses the seed ``base_seed``
    plus its index.
    """

    manifest_paths: Tuple[str, ...]
    strategy_kinds: Tuple[StrategyKind, ...] = DEFAULT_STRATEGY_KINDS
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    iterations: int = DEFAULT_ITERATIONS
    base_seed: int = 0
    link: LinkParams = field(default_factory=LinkParams)
    quantum: Quantum = field(default_factory=Quantum)
    baseline_kind: StrategyKind = DEFAULT_BASELINE_KIND
    has_static_weights: bool = False
    aggregate: str = "mean"
    output_folder: str = "epsched-results"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "manifest_paths", tuple(self.manifest_paths))
        if len(self.manifest_paths) == 0:
            raise OptionError("at least one manifest must be specified")
        if self.baseline_kind == StrategyKind.weighted_incremental:
            raise OptionError(f"baseline must be a strategy without alpha: {self.baseline_kind.value}")
        strategy_kinds = list(dict.fromkeys(self.strategy_kinds))
        if self.baseline_kind not in strategy_kinds:
            strategy_kinds.insert(0, self.baseline_kind)
        object.__setattr__(self, "strategy_kinds", tuple(strategy_kinds))
        try:
            alphas = tuple(dict.fromkeys(validated_alpha(alpha) for alpha in self.alphas))
        except Error as error:
            raise OptionError(str(error)) from error
        object.__setattr__(self, "alphas", alphas)
        if StrategyKind.weighted_incremental in self.strategy_kinds and len(self.alphas) == 0:
            raise OptionError("at least one alpha must be specified for the weighted strategy")
        if self.iterations < 1:
            raise OptionError(f"iterations are {self.iterations} but must be at least 1")
        if not 0 <= self.base_seed <= _MAX_SEED - self.iterations:
            raise OptionError(f"seed {self.base_seed} plus {self.iterations} iterations must fit into 64 bits")
        if self.aggregate not in AGGREGATES:
            raise OptionError(f"aggregate is {self.aggregate!r} but must be one of: {', '.join(AGGREGATES)}")
        if self.jobs < 1:
            raise OptionError(f"jobs are {self.jobs} but must be at least 1")

    @property
    def baseline(self) -> Strategy:
        return Strategy(self.baseline_kind)

    def strategies(self) -> List[Strategy]:
        """
        Concrete strategies to simulate, with one weighted strategy per alpha.
        """
        result = []
        for strategy_kind in self.strategy_kinds:
            if strategy_kind == StrategyKind.weighted_incremental:
                result.extend(Strategy.weighted_incremental(alpha) for alpha in self.alphas)
            else:
                result.append(Strategy(strategy_kind))
        return result

    def seeds(self) -> List[int]:
        return [self.base_seed + iteration for iteration in range(self.iterations)]


def expected_run_count(plan: ExperimentPlan) -> int:
    # Strategy kinds of a plan are unique.
    weighted_count = 1 if StrategyKind.weighted_incremental in plan.strategy_kinds else 0
    non_weighted_count = len(plan.strategy_kinds) - weighted_count
    return len(plan.manifest_paths) * plan.iterations * (non_weighted_count + weighted_count * len(plan.alphas))


@dataclass(frozen=True)
class SimulationJob:
    """
    A single simulation run of a sweep; can be sent to another process.
    """

    manifest: ResourceManifest
    strategy: Strategy
    link: LinkParams
    quantum: Quantum
    has_static_weights: bool = False


@dataclass(frozen=True)
class SimulationRun:
    job: SimulationJob
    trace: DeliveryTrace
    report: QoeReport

    @property
    def site_name(self) -> str:
        return self.job.manifest.site_name

    @property
    def seed(self) -> int:
        return self.job.link.seed


def simulation_jobs(plan: ExperimentPlan, manifests: Sequence[ResourceManifest]) -> List[SimulationJob]:
    """
    All jobs of ``plan`` ordered by manifest, iteration and strategy.
    """
    return [
        SimulationJob(
            manifest=manifest,
            strategy=strategy,
            link=dataclasses.replace(plan.link, seed=seed),
            quantum=plan.quantum,
            has_static_weights=plan.has_static_weights,
        )
        for manifest in manifests
        for seed in plan.seeds()
        for strategy in plan.strategies()
    ]


def run_simulation_job(job: SimulationJob) -> SimulationRun:
    trace = simulate(job.manifest, job.link, job.strategy, job.quantum, job.has_static_weights)
    violations = replay_check(trace, job.manifest)
    assert len(violations) == 0, f"{job.manifest.site_name}: {job.strategy.label}: {violations}"
    return SimulationRun(job, trace, derive_report(trace, job.manifest))


@dataclass
class SweepResult:
    """
    Results of :py:func:`run_sweep` after all artifacts have been written.
    """

    plan: ExperimentPlan
    runs: List[SimulationRun]
    sweep_summary: SweepSummary
    site_to_cells_map: Dict[str, List[ComparisonCell]]
    aggregated_cells: List[ComparisonCell]
    written_paths: List[str]


def _safe_file_name(name: str) -> str:
    return _UNSAFE_FILE_NAME_CHARACTERS_REGEX.sub("-", name).strip("-") or "unnamed"


def trace_file_name(run: SimulationRun) -> str:
    return f"{_safe_file_name(run.site_name)}__{run.job.strategy.label}__seed{run.seed}.csv"


def _loaded_manifests(manifest_paths: Sequence[str]) -> List[ResourceManifest]:
    result = [load_manifest(manifest_path) for manifest_path in manifest_paths]
    site_name_to_path_map = {}
    for manifest_path, manifest in zip(manifest_paths, result):
        other_path = site_name_to_path_map.get(manifest.site_name)
        if other_path is not None:
            raise OptionError(f"site name {manifest.site_name!r} is used by both {other_path} and {manifest_path}")
        site_name_to_path_map[manifest.site_name] = manifest_path
    return result


def _executed_runs(jobs: Sequence[SimulationJob], worker_count: int) -> Iterator[SimulationRun]:
    if worker_count == 1:
        yield from (run_simulation_job(job) for job in jobs)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=worker_count) as executor:
            # NOTE: map() yields in the order of the jobs, so results do not depend on the worker count.
            yield from executor.map(run_simulation_job, jobs)


def _rendered_text(write_to) -> str:
    with io.StringIO() as target:
        write_to(target)
        return target.getvalue()


def _improvement_text(variant_labels: Sequence[str], cells: Sequence[ComparisonCell]) -> str:
    def write_to(target: TextIO):
        with ImprovementCsvWriter(target, variant_labels) as improvement_writer:
            for cell in cells:
                improvement_writer.add(cell)

    return _rendered_text(write_to)


def run_sweep(plan: ExperimentPlan, has_progress: bool = False) -> SweepResult:
    """
    Simulate all runs of ``plan`` and write traces, reports, statistics and
    improvement matrices to ``plan.output_folder``.

    Every manifest is loaded and every run is simulated before the first
    file is written, so a failing sweep leaves no partial results behind.
    """
    manifests = _loaded_manifests(plan.manifest_paths)
    jobs = simulation_jobs(plan, manifests)
    assert len(jobs) == expected_run_count(plan)
    _log.info("running %d simulations with %d worker(s)", len(jobs), plan.jobs)

    runs = []
    with Progress(disable=not has_progress, transient=True) as progress:
        for run in progress.track(_executed_runs(jobs, plan.jobs), total=len(jobs), description="Simulating"):
            _log.info(
                "%s: %s with seed %d: page complete after %.1f ms",
                run.site_name,
                run.job.strategy.label,
                run.seed,
                run.report.page_complete_ms,
            )
            runs.append(run)

    sweep_summary = SweepSummary()
    for run in runs:
        sweep_summary.add(run.site_name, run.job.strategy.label, run.report)
    baseline_label = plan.baseline.label
    variant_labels = [strategy.label for strategy in plan.strategies() if strategy.label != baseline_label]
    site_to_cells_map = {}
    for manifest in manifests:
        baseline_report = sweep_summary.mean_report(manifest.site_name, baseline_label)
        variant_reports = {
            variant_label: sweep_summary.mean_report(manifest.site_name, variant_label)
            for variant_label in variant_labels
        }
        site_to_cells_map[manifest.site_name] = improvement_table(baseline_report, variant_reports)
    aggregated_cells = aggregated_improvements(site_to_cells_map, plan.aggregate)

    relative_path_to_text_map = {}
    for run in runs:
        relative_path_to_text_map[os.path.join(TRACES_FOLDER_NAME, trace_file_name(run))] = _rendered_text(
            lambda target, trace=run.trace: write_trace_csv(trace, target)
        )

    def write_report(target: TextIO):
        with ReportCsvWriter(target) as report_writer:
            for run in runs:
                report_writer.add(run.site_name, run.job.strategy, run.seed, run.report)

    def write_statistics(target: TextIO):
        with StatisticsCsvWriter(target, sweep_summary):
            pass

    relative_path_to_text_map[REPORT_NAME] = _rendered_text(write_report)
    relative_path_to_text_map[STATISTICS_NAME] = _rendered_text(write_statistics)
    for site_name, cells in site_to_cells_map.items():
        relative_path_to_text_map[f"improvement_{_safe_file_name(site_name)}.csv"] = _improvement_text(
            variant_labels, cells
        )
    relative_path_to_text_map[IMPROVEMENT_NAME] = _improvement_text(variant_labels, aggregated_cells)

    written_paths = []
    try:
        os.makedirs(os.path.join(plan.output_folder, TRACES_FOLDER_NAME), exist_ok=True)
    except OSError as error:
        raise OptionError(f"cannot create output folder {plan.output_folder}: {error}") from error
    for relative_path, text in relative_path_to_text_map.items():
        target_path = os.path.join(plan.output_folder, relative_path)
        with open(target_path, "w", encoding="utf-8", newline="") as target_file:
            target_file.write(text)
        written_paths.append(target_path)
    _log.info("wrote %d files to %s", len(written_paths), plan.output_folder)
    return SweepResult(plan, runs, sweep_summary, site_to_cells_map, aggregated_cells, written_paths)


def _pluralized(count: int, singular: str) -> str:
    return f"{count} {singular}" if count == 1 else f"{count} {singular}s"


def manifest_description(manifest: ResourceManifest) -> str:
    """
    One line characterization of ``manifest``, for example
    "1 resource, 5000 bytes, urgency histogram {3:1}".
    """
    histogram_text = ", ".join(f"{level}:{count}" for level, count in manifest.urgency_histogram().items())
    return (
        f"{_pluralized(len(manifest.resources), 'resource')}, {manifest.total_bytes} bytes, "
        f"urgency histogram {{{histogram_text}}}"
    )


def describe_manifest(manifest_path: str, target_stream: Optional[TextIO] = None) -> str:
    """
    Print the resource count, total size, urgency histogram and role flag
    inventory of the manifest stored in ``manifest_path``.

    :return: the one line characterization
    """
    manifest = load_manifest(manifest_path)
    result = manifest_description(manifest)
    console = Console(file=target_stream, soft_wrap=True, highlight=False)
    console.print(f"{manifest.site_name}: {result}", markup=False)

    table = Table()
    table.add_column("Urgency", justify="right")
    table.add_column("Resources", justify="right")
    table.add_column("Bytes", justify="right")
    for role_flag in RoleFlag:
        table.add_column(role_flag.value, justify="right")
    for level, count in manifest.urgency_histogram().items():
        resources = [resource for resource in manifest.resources if resource.urgency.level == level]
        table.add_row(
            str(level),
            str(count),
            str(sum(resource.size_bytes for resource in resources)),
            *[str(sum(1 for resource in resources if resource.has_role(role_flag))) for role_flag in RoleFlag],
        )
    role_flag_counts = manifest.role_flag_counts()
    table.add_row(
        "Sum",
        str(len(manifest.resources)),
        str(manifest.total_bytes),
        *[str(role_flag_counts[role_flag]) for role_flag in RoleFlag],
    )
    console.print(table)
    return result
