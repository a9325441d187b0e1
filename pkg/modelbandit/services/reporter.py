"""
Result reporting: per-step CSV, per-algorithm regret summary and run manifest
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

from ..errors import OutputError
from ..models import SummaryRow, TrialRecord

logger = logging.getLogger(__name__)

STEPS_HEADER = ["run", "algorithm", "step", "arm", "reward", "best_reward", "error", "eta", "cum_regret"]
SUMMARY_HEADER = ["preset", "algorithm", "runs", "mean_total_regret", "std_total_regret"]


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


@dataclass(frozen=True)
class RunningStats:
    """Count, mean and sum of squared deviations, mergeable across partitions"""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, value: float) -> "RunningStats":
        count = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / count
        return RunningStats(count, mean, self.m2 + delta * (value - mean))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return RunningStats(count, mean, m2)

    @property
    def std(self) -> float:
        """Sample standard deviation (n - 1 denominator); 0 for fewer than two values"""
        if self.count < 2:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / (self.count - 1))


def pairwise_stats(values: Sequence[float]) -> RunningStats:
    """Tree reduction over values in the given order"""
    parts = [RunningStats().push(v) for v in values]
    if not parts:
        return RunningStats()
    while len(parts) > 1:
        merged = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def summarize(preset: str, trials: Iterable[TrialRecord], algorithms: Sequence[str]) -> List[SummaryRow]:
    """Mean and sample standard deviation of total regret per algorithm, over runs in run order

    An algorithm whose trials ran without the best-arm reward gets NaN for
    both columns.
    """
    by_algorithm: Dict[str, List[TrialRecord]] = {name: [] for name in algorithms}
    for trial in trials:
        by_algorithm.setdefault(trial.algorithm, []).append(trial)

    rows = []
    for name, group in by_algorithm.items():
        completed = sorted((t for t in group if not t.aborted), key=lambda t: t.run)
        skipped = len(group) - len(completed)
        if skipped:
            logger.warning(f"{name}: {skipped} aborted trial(s) excluded from the summary")
        if not all(t.regret_measured for t in completed):
            logger.info(f"{name}: regret was not evaluated, summary left as NaN")
            nan = float("nan")
            rows.append(SummaryRow(preset, name, len(completed), nan, nan))
            continue
        stats = pairwise_stats([t.total_regret for t in completed])
        rows.append(SummaryRow(preset, name, stats.count,
                               stats.mean if stats.count else float("nan"), stats.std))
    return rows


def _write_csv(path: Path, header: List[str], rows: Iterable[List[Any]]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as e:
        raise OutputError(str(path), e.strerror or str(e)) from e


def write_results(trials: Sequence[TrialRecord], summary: Sequence[SummaryRow], path: str,
                  manifest: Dict[str, Any]) -> Dict[str, Path]:
    """Write steps.csv, summary.csv and manifest.json under ``path``"""
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(str(directory), e.strerror or str(e)) from e

    ordered = sorted(trials, key=lambda t: t.run)
    files = {
        "steps": directory / "steps.csv",
        "summary": directory / "summary.csv",
        "manifest": directory / "manifest.json",
    }
    _write_csv(files["steps"], STEPS_HEADER, (step.to_row() for t in ordered for step in t.steps))
    _write_csv(files["summary"], SUMMARY_HEADER, (row.to_row() for row in summary))
    try:
        with open(files["manifest"], "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OutputError(str(files["manifest"]), e.strerror or str(e)) from e

    logger.info(f"Results written to {directory}")
    return files
