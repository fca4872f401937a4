"""
Test to write results of epsched sweeps.
"""

# Copyright (c) 2024, epsched contributors.
# All rights reserved. Distributed under the BSD License.
import io
from pathlib import Path

from epsched import write
from epsched.metrics import ComparisonCell, QoeReport
from epsched.scheduler import Strategy
from epsched.summary import SweepSummary

from ._common import TempFolderTest

_SOME_REPORT = QoeReport(45.5, 60.0, None, 120.0, 67.5, 65.0)


def test_can_format_numbers():
    assert write.formatted_number(1.5) == "1.500000"
    assert write.formatted_number(None) == ""
    assert write.formatted_alpha(Strategy.weighted_incremental(0.25)) == "0.25"
    assert write.formatted_alpha(Strategy.sequential_fifo()) == ""
    assert write.formatted_milliseconds(12.345) == "12.3"
    assert write.formatted_milliseconds(None) == "-"
    assert write.formatted_percentage(20.0) == "+20.0"
    assert write.formatted_percentage(-3.25) == "-3.2"


def test_can_write_statistics_only_when_closed():
    sweep_summary = SweepSummary()
    sweep_summary.add("w3", "weighted-1", QoeReport(10.0, 20.0, None, 40.0, 25.0, 20.0))
    with io.StringIO() as target_stream:
        with write.StatisticsCsvWriter(target_stream, sweep_summary) as writer:
            assert isinstance(writer, write.BaseWriter)
            assert target_stream.getvalue() == ""
        assert target_stream.getvalue().startswith("site,strategy,metric,")


def test_can_write_report_csv():
    with io.StringIO() as target_stream:
        with write.ReportCsvWriter(target_stream) as writer:
            writer.add("inspired-by-w3", Strategy.weighted_incremental(0.5), 7, _SOME_REPORT)
            writer.add("inspired-by-w3", Strategy.sequential_fifo(), 7, _SOME_REPORT)
        lines = target_stream.getvalue().splitlines()
    assert lines[0] == "site,strategy,alpha,seed,metric,value"
    assert len(lines) == 1 + 2 * 6
    assert lines[1] == "inspired-by-w3,weighted,0.5,7,proxy_fcp_ms,45.500000"
    assert lines[3] == "inspired-by-w3,weighted,0.5,7,proxy_tti_ms,"
    assert lines[7] == "inspired-by-w3,sequential-fifo,,7,proxy_fcp_ms,45.500000"


def test_can_write_statistics_csv():
    sweep_summary = SweepSummary()
    sweep_summary.add("w3", "weighted-1", QoeReport(10.0, 20.0, None, 40.0, 25.0, 20.0))
    sweep_summary.add("w3", "weighted-1", QoeReport(14.0, 20.0, None, 40.0, 25.0, 20.0))
    with io.StringIO() as target_stream:
        with write.StatisticsCsvWriter(target_stream, sweep_summary):
            pass
        lines = target_stream.getvalue().splitlines()
    assert lines == [
        "site,strategy,metric,count,absent_count,mean,std",
        "w3,weighted-1,proxy_fcp_ms,2,0,12.000000,2.828427",
        "w3,weighted-1,proxy_lcp_ms,2,0,20.000000,0.000000",
        "w3,weighted-1,proxy_tti_ms,0,2,,",
        "w3,weighted-1,page_complete_ms,2,0,40.000000,0.000000",
        "w3,weighted-1,mean_completion_ms,2,0,25.000000,0.000000",
        "w3,weighted-1,median_completion_ms,2,0,20.000000,0.000000",
    ]


def test_can_write_improvement_csv():
    with io.StringIO() as target_stream:
        with write.ImprovementCsvWriter(target_stream, ["weighted-0", "weighted-1"]) as writer:
            writer.add(ComparisonCell("proxy_lcp_ms", "weighted-1", 100.0, 80.0, 20.0))
            writer.add(ComparisonCell("proxy_fcp_ms", "weighted-0", 100.0, 110.0, -10.0))
            writer.add(ComparisonCell("proxy_fcp_ms", "weighted-1", 100.0, 90.0, 10.0))
        lines = target_stream.getvalue().splitlines()
    assert lines == [
        "metric,weighted-0,weighted-1",
        "proxy_fcp_ms,-10.000000,10.000000",
        "proxy_lcp_ms,,20.000000",
    ]


def test_can_skip_improvement_csv_rows_on_error():
    with io.StringIO() as target_stream:
        try:
            with write.ImprovementCsvWriter(target_stream, ["weighted-1"]) as writer:
                writer.add(ComparisonCell("proxy_fcp_ms", "weighted-1", 100.0, 90.0, 10.0))
                raise ValueError("broken sweep")
        except ValueError:
            pass
        assert target_stream.getvalue() == ""


class SummaryWriterTest(TempFolderTest):
    def test_can_write_summary(self):
        sweep_summary = SweepSummary()
        sweep_summary.add("w3", "sequential-fifo", QoeReport(100.0, 200.0, None, 400.0, 150.0, 120.0))
        sweep_summary.add("w3", "weighted-1", QoeReport(80.0, 150.0, None, 410.0, 140.0, 118.0))
        aggregated_cells = [
            ComparisonCell("proxy_fcp_ms", "weighted-1", 100.0, 80.0, 20.0),
            ComparisonCell("proxy_lcp_ms", "weighted-1", 200.0, 150.0, 25.0),
            ComparisonCell("page_complete_ms", "weighted-1", 400.0, 410.0, -2.5),
        ]
        lines = self._summary_lines_for(sweep_summary, aggregated_cells)
        summary_text = "\n".join(lines)
        assert "Mean time in ms" in summary_text
        assert "Improvement over baseline in %" in summary_text
        fifo_line = next(line for line in lines if "sequential-fifo" in line)
        assert "w3" in fifo_line
        assert "100.0" in fifo_line
        assert any("FCP" in line and "+20.0" in line for line in lines)
        assert any("Page" in line and "-2.5" in line for line in lines)

    def test_can_write_summary_without_improvements(self):
        sweep_summary = SweepSummary()
        sweep_summary.add("late-lcp", "round-robin", QoeReport(10.0, 20.0, 30.0, 40.0, 25.0, 20.0))
        summary_text = "\n".join(self._summary_lines_for(sweep_summary, []))
        assert "Mean time in ms" in summary_text
        assert "Improvement" not in summary_text

    def _summary_lines_for(self, sweep_summary, aggregated_cells):
        summary_path = Path(self.tests_temp_folder, "summary.tmp")
        with summary_path.open("w", encoding="utf-8") as summary_file, write.SummaryWriter(
            summary_file, sweep_summary, aggregated_cells
        ):
            pass
        return summary_path.read_text("utf-8").splitlines()
