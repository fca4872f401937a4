"""
Tests for experiment plans and sweeps over manifests, strategies and seeds.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import io
import os

import pytest

from epsched.common import ManifestError, OptionError
from epsched.manifest import SyntheticProfile, bundled_manifest_path, generate_synthetic, load_manifest, save_manifest
from epsched.metrics import derive_report
from epsched.netsim import LinkParams, simulate
from epsched.scheduler import Strategy, StrategyKind
from epsched.sweep import (
    IMPROVEMENT_NAME,
    REPORT_NAME,
    STATISTICS_NAME,
    TRACES_FOLDER_NAME,
    ExperimentPlan,
    describe_manifest,
    expected_run_count,
    manifest_description,
    run_sweep,
    simulation_jobs,
)

from ._common import TempFolderTest, manifest_json_map

_LATE_LCP_PATH = bundled_manifest_path("late_lcp")
_SCRIPT_HEAVY_PATH = bundled_manifest_path("script_heavy")


def _file_contents(folder):
    result = {}
    for current_folder, _, file_names in os.walk(folder):
        for file_name in file_names:
            path = os.path.join(current_folder, file_name)
            with open(path, "rb") as file:
                result[os.path.relpath(path, folder)] = file.read()
    return result


def test_can_create_plan_with_defaults():
    plan = ExperimentPlan([_LATE_LCP_PATH])
    assert plan.manifest_paths == (_LATE_LCP_PATH,)
    assert plan.alphas == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert plan.iterations == 10
    assert plan.seeds() == list(range(10))
    assert plan.link == LinkParams()
    assert plan.baseline == Strategy.sequential_fifo()
    assert [strategy.label for strategy in plan.strategies()] == [
        "sequential-fifo",
        "round-robin",
        "weighted-0",
        "weighted-0.25",
        "weighted-0.5",
        "weighted-0.75",
        "weighted-1",
    ]
    assert expected_run_count(plan) == 1 * 10 * (2 + 5)


def test_can_add_baseline_to_strategies():
    plan = ExperimentPlan(
        [_LATE_LCP_PATH], strategy_kinds=[StrategyKind.weighted_incremental], alphas=[0.5], base_seed=100, iterations=2
    )
    assert plan.strategy_kinds == (StrategyKind.sequential_fifo, StrategyKind.weighted_incremental)
    assert plan.seeds() == [100, 101]
    assert expected_run_count(plan) == 1 * 2 * (1 + 1)


def test_can_count_runs_without_weighted_strategy():
    plan = ExperimentPlan(
        [_LATE_LCP_PATH, _SCRIPT_HEAVY_PATH],
        strategy_kinds=[StrategyKind.round_robin],
        alphas=[],
        baseline_kind=StrategyKind.sequential_by_urgency,
        iterations=3,
    )
    assert expected_run_count(plan) == 2 * 3 * 2


def test_can_order_jobs_by_manifest_seed_and_strategy():
    plan = ExperimentPlan(
        [_LATE_LCP_PATH], strategy_kinds=[StrategyKind.weighted_incremental], alphas=[0, 1], iterations=2
    )
    jobs = simulation_jobs(plan, [load_manifest(_LATE_LCP_PATH)])
    assert [(job.link.seed, job.strategy.label) for job in jobs] == [
        (0, "sequential-fifo"),
        (0, "weighted-0"),
        (0, "weighted-1"),
        (1, "sequential-fifo"),
        (1, "weighted-0"),
        (1, "weighted-1"),
    ]


@pytest.mark.parametrize(
    "plan_kwargs, expected_message",
    [
        ({"manifest_paths": []}, "at least one manifest"),
        ({"alphas": []}, "at least one alpha"),
        ({"alphas": [0.5, 1.5]}, "between 0 and 1"),
        ({"iterations": 0}, "iterations"),
        ({"base_seed": -1}, "64 bits"),
        ({"base_seed": 2**64 - 1, "iterations": 2}, "64 bits"),
        ({"aggregate": "max"}, "mean, median"),
        ({"jobs": 0}, "jobs"),
        ({"baseline_kind": StrategyKind.weighted_incremental}, "baseline"),
    ],
)
def test_fails_on_broken_plan(plan_kwargs, expected_message):
    kwargs = {"manifest_paths": [_LATE_LCP_PATH], **plan_kwargs}
    with pytest.raises(OptionError, match=expected_message):
        ExperimentPlan(**kwargs)


def test_can_describe_manifest():
    manifest = generate_synthetic(SyntheticProfile(10, 100_000, {0: 0.1, 3: 0.5, 7: 0.4}, depth=2), 0)
    assert manifest_description(manifest) == "10 resources, 100000 bytes, urgency histogram {0:1, 3:5, 7:4}"


def test_can_keep_lcp_earlier_with_weighted_delivery_for_all_seeds():
    manifest = load_manifest(_LATE_LCP_PATH)
    for seed in range(10):
        link = LinkParams(one_way_delay_ms=10.0, loss_rate=0.0005, seed=seed)

        def proxy_lcp_ms(strategy):
            return derive_report(simulate(manifest, link, strategy), manifest).proxy_lcp_ms

        weighted_lcp_ms = proxy_lcp_ms(Strategy.weighted_incremental(1))
        assert weighted_lcp_ms < proxy_lcp_ms(Strategy.sequential_fifo()), seed
        assert weighted_lcp_ms < proxy_lcp_ms(Strategy.round_robin()), seed


class SweepTest(TempFolderTest):
    def _plan(self, output_name, **plan_kwargs) -> ExperimentPlan:
        kwargs = {
            "manifest_paths": [_LATE_LCP_PATH],
            "strategy_kinds": [StrategyKind.weighted_incremental],
            "alphas": [0.0, 1.0],
            "iterations": 1,
            "output_folder": os.path.join(self.tests_temp_folder, output_name),
            **plan_kwargs,
        }
        return ExperimentPlan(**kwargs)

    def test_can_run_sweep_with_expected_run_count(self):
        plan = self._plan("counted")
        assert expected_run_count(plan) == 3
        result = run_sweep(plan)
        assert len(result.runs) == 3
        traces_folder = os.path.join(plan.output_folder, TRACES_FOLDER_NAME)
        assert sorted(os.listdir(traces_folder)) == [
            "late-lcp__sequential-fifo__seed0.csv",
            "late-lcp__weighted-0__seed0.csv",
            "late-lcp__weighted-1__seed0.csv",
        ]
        for name in (REPORT_NAME, STATISTICS_NAME, IMPROVEMENT_NAME, "improvement_late-lcp.csv"):
            assert os.path.isfile(os.path.join(plan.output_folder, name)), name
        assert len(result.written_paths) == 3 + 4
        assert result.sweep_summary.run_count == 3

    def test_can_write_improvement_matrix_per_site(self):
        plan = self._plan("matrix")
        run_sweep(plan)
        with open(os.path.join(plan.output_folder, "improvement_late-lcp.csv"), encoding="utf-8") as improvement_file:
            lines = improvement_file.read().splitlines()
        assert lines[0] == "metric,weighted-0,weighted-1"
        assert [line.split(",")[0] for line in lines[1:]] == [
            "proxy_fcp_ms",
            "proxy_lcp_ms",
            "page_complete_ms",
            "mean_completion_ms",
            "median_completion_ms",
        ]
        with open(os.path.join(plan.output_folder, REPORT_NAME), encoding="utf-8") as report_file:
            report_lines = report_file.read().splitlines()
        assert report_lines[0] == "site,strategy,alpha,seed,metric,value"
        assert len(report_lines) == 1 + 3 * 6

    def test_can_produce_identical_artifacts_for_same_seed(self):
        plan_kwargs = {
            "manifest_paths": [bundled_manifest_path("inspired_by_w3"), _SCRIPT_HEAVY_PATH],
            "strategy_kinds": [StrategyKind.round_robin, StrategyKind.weighted_incremental],
            "alphas": [0.0, 0.5, 1.0],
            "iterations": 2,
            "base_seed": 42,
        }
        first_plan = self._plan("first", **plan_kwargs)
        second_plan = self._plan("second", **plan_kwargs)
        run_sweep(first_plan)
        run_sweep(second_plan)
        first_contents = _file_contents(first_plan.output_folder)
        assert len(first_contents) == 2 * 2 * 5 + 3 + 2
        assert first_contents == _file_contents(second_plan.output_folder)

    def test_can_produce_identical_artifacts_with_several_jobs(self):
        single_plan = self._plan("single", iterations=3)
        parallel_plan = self._plan("parallel", iterations=3, jobs=2)
        run_sweep(single_plan)
        run_sweep(parallel_plan)
        assert _file_contents(single_plan.output_folder) == _file_contents(parallel_plan.output_folder)

    def test_can_show_degraded_tti_and_improved_lcp_for_script_heavy_page(self):
        plan = self._plan(
            "script_heavy",
            manifest_paths=[_SCRIPT_HEAVY_PATH],
            alphas=[1.0],
            iterations=3,
            link=LinkParams(bandwidth_bytes_per_sec=1_000_000),
        )
        result = run_sweep(plan)
        metric_name_to_cell_map = {cell.metric_name: cell for cell in result.site_to_cells_map["script-heavy"]}
        assert metric_name_to_cell_map["proxy_tti_ms"].improvement_pct < 0
        assert metric_name_to_cell_map["proxy_lcp_ms"].improvement_pct > 0

    def test_can_aggregate_improvements_over_sites(self):
        plan = self._plan("aggregated", manifest_paths=[_LATE_LCP_PATH, _SCRIPT_HEAVY_PATH], aggregate="median")
        result = run_sweep(plan)
        assert set(result.site_to_cells_map.keys()) == {"late-lcp", "script-heavy"}
        lcp_cells = [
            cell
            for cell in result.aggregated_cells
            if cell.metric_name == "proxy_lcp_ms" and cell.variant_label == "weighted-1"
        ]
        assert len(lcp_cells) == 1
        site_improvements = [
            cell.improvement_pct
            for cells in result.site_to_cells_map.values()
            for cell in cells
            if cell.metric_name == "proxy_lcp_ms" and cell.variant_label == "weighted-1"
        ]
        # With two sites the median is the midpoint.
        assert lcp_cells[0].improvement_pct == pytest.approx(sum(site_improvements) / 2)

    def test_can_write_static_weights_into_traces(self):
        plan = self._plan("static", alphas=[0.5], has_static_weights=True)
        result = run_sweep(plan)
        assert all(run.trace.static_weights for run in result.runs)

    def test_fails_without_partial_results_on_broken_manifest(self):
        broken_manifest_path = self.create_temp_manifest(
            "broken.json", manifest_json_map([{"id": "a", "size_bytes": -1}], site_name="broken")
        )
        plan = self._plan("never", manifest_paths=[_LATE_LCP_PATH, broken_manifest_path])
        with pytest.raises(ManifestError, match="broken.json"):
            run_sweep(plan)
        assert not os.path.exists(plan.output_folder)

    def test_fails_on_duplicate_site_name(self):
        copied_manifest_path = os.path.join(self.tests_temp_folder, "copy.json")
        save_manifest(load_manifest(_LATE_LCP_PATH), copied_manifest_path)
        plan = self._plan("duplicate", manifest_paths=[_LATE_LCP_PATH, copied_manifest_path])
        with pytest.raises(OptionError, match="site name 'late-lcp' is used by both"):
            run_sweep(plan)
        assert not os.path.exists(plan.output_folder)

    def test_can_describe_single_resource_manifest(self):
        manifest_path = self.create_temp_manifest("single.json", manifest_json_map([{"id": "a", "size_bytes": 5000}]))
        with io.StringIO() as target_stream:
            description = describe_manifest(manifest_path, target_stream)
            output = target_stream.getvalue()
        assert description == "1 resource, 5000 bytes, urgency histogram {3:1}"
        assert output.startswith("example: 1 resource, 5000 bytes, urgency histogram {3:1}\n")
        assert "render_critical" in output

    def test_fails_on_describing_missing_manifest(self):
        with pytest.raises(ManifestError, match="missing.json: cannot read manifest"):
            describe_manifest(os.path.join(self.tests_temp_folder, "missing.json"), io.StringIO())
