"""
Unit tests for result reporting
"""

import json
import math

import numpy as np
import pytest

from modelbandit.errors import OutputError
from modelbandit.models import StepRecord, SummaryRow, TrialRecord
from modelbandit.services.reporter import (
    STEPS_HEADER,
    SUMMARY_HEADER,
    RunningStats,
    format_value,
    pairwise_stats,
    summarize,
    write_results,
)


def _trial(run: int, algorithm: str, steps: int, regret_per_step: float = 1.0, status: str = "ok"):
    trial = TrialRecord(run, algorithm, 1.0, status=status)
    for step in range(steps):
        trial.steps.append(StepRecord(run, algorithm, step, 0, 0.1, 0.1 + regret_per_step, 0.9, 1.0,
                                      regret_per_step * (step + 1)))
    return trial


@pytest.mark.unit
class TestStatistics:
    def test_format(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(3) == "3"
        assert format_value("kf-manb") == "kf-manb"

    def test_constant_values(self):
        stats = pairwise_stats([2.0, 2.0, 2.0, 2.0])
        assert stats.mean == 2.0
        assert stats.std == 0.0

    def test_sample_standard_deviation(self):
        stats = pairwise_stats([1.0, 2.0, 3.0, 4.0])
        assert stats.mean == pytest.approx(2.5)
        assert stats.std == pytest.approx(math.sqrt(5.0 / 3.0))

    def test_matches_numpy(self, rng):
        values = rng.normal(3.0, 2.0, size=101)
        stats = pairwise_stats(values.tolist())
        assert stats.count == 101
        assert stats.mean == pytest.approx(np.mean(values))
        assert stats.std == pytest.approx(np.std(values, ddof=1))

    def test_merge_equals_push(self, rng):
        values = rng.normal(size=10).tolist()
        pushed = RunningStats()
        for value in values:
            pushed = pushed.push(value)
        left, right = pairwise_stats(values[:3]), pairwise_stats(values[3:])
        merged = left.merge(right)
        assert merged.count == pushed.count
        assert merged.mean == pytest.approx(pushed.mean)
        assert merged.m2 == pytest.approx(pushed.m2)

    def test_single_value_has_zero_spread(self):
        assert RunningStats().push(5.0).std == 0.0
        assert pairwise_stats([]).count == 0


@pytest.mark.unit
class TestSummary:
    def test_constant_regret(self):
        trials = [_trial(run, "kf-mandb", 2) for run in range(4)]
        (row,) = summarize("small", trials, ["kf-mandb"])
        assert row == SummaryRow("small", "kf-mandb", 4, 2.0, 0.0)

    def test_aborted_trials_are_excluded(self):
        trials = [_trial(0, "ucb1-normal", 3), _trial(1, "ucb1-normal", 1, status="aborted: boom")]
        (row,) = summarize("small", trials, ["ucb1-normal"])
        assert row.runs == 1
        assert row.mean_total_regret == 3.0

    def test_algorithm_without_runs(self):
        (row,) = summarize("small", [], ["kf-manb"])
        assert row.runs == 0
        assert math.isnan(row.mean_total_regret)

    def test_unmeasured_regret_is_nan(self):
        trials = [_trial(run, "ucb1-normal", 3) for run in range(2)]
        for step in trials[1].steps:
            step.best_reward = float("nan")
        (row,) = summarize("chain-spread", trials, ["ucb1-normal"])
        assert row.runs == 2
        assert math.isnan(row.mean_total_regret)
        assert math.isnan(row.std_total_regret)

    def test_unmeasured_regret_is_written_as_nan(self, tmp_path):
        trial = _trial(0, "kf-manb", 2)
        for step in trial.steps:
            step.best_reward = float("nan")
        files = write_results([trial], summarize("line-to-arc", [trial], ["kf-manb"]), str(tmp_path), {})
        assert files["summary"].read_text().splitlines()[1] == "line-to-arc,kf-manb,1,nan,nan"


@pytest.mark.unit
class TestWriteResults:
    def test_files_and_formats(self, tmp_path):
        trials = [_trial(0, "kf-manb", 3)]
        summary = summarize("small", trials, ["kf-manb"])
        files = write_results(trials, summary, str(tmp_path / "out"), {"seed": 7, "config": {"runs": 1}})

        steps = files["steps"].read_bytes()
        assert b"\r\n" not in steps
        lines = steps.decode().splitlines()
        assert len(lines) == 4
        assert lines[0] == ",".join(STEPS_HEADER)
        assert lines[1] == "0,kf-manb,0,0,0.10000000000000001,1.1000000000000001,0.90000000000000002,1,1"

        summary_lines = files["summary"].read_text().splitlines()
        assert summary_lines == [",".join(SUMMARY_HEADER), "small,kf-manb,1,3,0"]

        manifest = json.loads(files["manifest"].read_text())
        assert manifest == {"config": {"runs": 1}, "seed": 7}

    def test_rewrite_is_byte_identical(self, tmp_path):
        trials = [_trial(run, "kf-mandb", 5, regret_per_step=0.3) for run in range(2)]
        summary = summarize("small", trials, ["kf-mandb"])
        first = write_results(trials, summary, str(tmp_path / "a"), {})
        second = write_results(list(reversed(trials)), summary, str(tmp_path / "b"), {})
        for key in ("steps", "summary", "manifest"):
            assert first[key].read_bytes() == second[key].read_bytes()

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        with pytest.raises(OutputError) as excinfo:
            write_results([], [], str(blocker / "out"), {})
        assert str(blocker / "out") in str(excinfo.value)
