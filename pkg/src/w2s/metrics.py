"""Pass@k estimation, reasoning-gap recovery, length statistics, reports.

Pass@k uses the unbiased combinatorial estimator over per-problem sample
tallies, computed with exact integer binomials. The reasoning-gap metric
normalizes a distilled student's Pass@1 gain against the gain of the same
student trained with RL; it can exceed 100, go negative, and is
inapplicable when the RL student ties the weak teacher.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from math import comb
from pathlib import Path
from statistics import fmean

from .inference import GenerationResult

logger = logging.getLogger(__name__)

ENDPOINT_USAGE = "endpoint_usage"
WHITESPACE_FALLBACK = "whitespace_fallback"

# Rendered in report cells when a gap-recovery value does not exist.
INAPPLICABLE_MARK = "–"


@dataclass(frozen=True)
class SampleTally:
    """Per-problem evaluation tally: n samples drawn, c graded correct."""

    problem_id: str
    n: int
    c: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"tally {self.problem_id}: n must be >= 1, got {self.n}")
        if not 0 <= self.c <= self.n:
            raise ValueError(f"tally {self.problem_id}: need 0 <= c <= n, got c={self.c} n={self.n}")


@dataclass(frozen=True)
class RgrInputs:
    """Pass@1 percentages for the weak teacher, the distilled student, and
    the RL-trained student."""

    weak: float
    w2s: float
    strong: float

    def __post_init__(self) -> None:
        for name, value in (("weak", self.weak), ("w2s", self.w2s), ("strong", self.strong)):
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100], got {value}")


@dataclass(frozen=True)
class LengthStats:
    count: int
    mean_tokens: float
    source: str

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("length stats need at least one result")
        if self.mean_tokens < 0:
            raise ValueError("mean tokens cannot be negative")


def pass_at_k(tallies: list[SampleTally], k: int) -> float:
    """Unbiased Pass@k over per-problem tallies.

    Averages 1 - C(n_i - c_i, k) / C(n_i, k) across problems. Binomials
    are exact integers, so there is no overflow for any practical n.
    """
    if not tallies:
        raise ValueError("pass_at_k needs at least one tally")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for tally in tallies:
        if tally.n < k:
            raise ValueError(
                f"tally {tally.problem_id}: n={tally.n} < k={k}; cannot estimate pass@{k}"
            )
    total = 0.0
    for tally in tallies:
        # comb returns 0 when n - c < k, which correctly yields 1.0.
        total += 1.0 - comb(tally.n - tally.c, k) / comb(tally.n, k)
    return total / len(tallies)


def rgr(inputs: RgrInputs) -> float | None:
    """Share of the RL reasoning gain recovered by distillation, in percent.

    Returns 100 * (w2s - weak) / (strong - weak), or None when the RL
    student ties the weak teacher (zero gap: the ratio is inapplicable,
    not an error).
    """
    gap = inputs.strong - inputs.weak
    if gap == 0.0:
        return None
    return 100.0 * (inputs.w2s - inputs.weak) / gap


def length_stats(results: list[GenerationResult]) -> LengthStats:
    """Mean completion length in tokens.

    Uses endpoint-reported token counts when every result carries one;
    otherwise falls back to whitespace-delimited counts for all results.
    The two counting methods are never mixed within one statistic.
    """
    if not results:
        raise ValueError("length_stats needs at least one result")
    if all(r.completion_tokens is not None for r in results):
        return LengthStats(
            count=len(results),
            mean_tokens=fmean(r.completion_tokens for r in results),
            source=ENDPOINT_USAGE,
        )
    return LengthStats(
        count=len(results),
        mean_tokens=fmean(len(r.text.split()) for r in results),
        source=WHITESPACE_FALLBACK,
    )


@dataclass(frozen=True)
class ReportRow:
    """One benchmark/method cell group for the results table.

    rgr=None renders as the inapplicable mark; mean_length=None leaves the
    cell blank.
    """

    benchmark: str
    method: str
    pass_at_1: float
    rgr: float | None = None
    mean_length: float | None = None


@dataclass(frozen=True)
class ReportPaths:
    markdown: Path
    csv: Path
    warnings: tuple[str, ...]


_COLUMNS = ("Benchmark", "Method", "Pass@1", "RGR", "MeanLength")


def build_report(rows: list[ReportRow], out_dir: Path, basename: str = "report") -> ReportPaths:
    """Write the results table as markdown and CSV.

    Rows are sorted by (benchmark, method) and values formatted to two
    decimals, so identical inputs produce byte-identical files. If the
    methods do not cover a consistent benchmark set, missing combinations
    appear as rows with blank value cells and a warning is logged.
    """
    if not rows:
        raise ValueError("build_report needs at least one row")

    index = {(r.benchmark, r.method): r for r in rows}
    benchmarks = sorted({r.benchmark for r in rows})
    methods = sorted({r.method for r in rows})

    warnings = []
    for method in methods:
        missing = [b for b in benchmarks if (b, method) not in index]
        if missing:
            message = f"method {method!r} has no results for benchmarks: {', '.join(missing)}"
            warnings.append(message)
            logger.warning(message)

    table_rows = []
    for benchmark in benchmarks:
        for method in methods:
            row = index.get((benchmark, method))
            if row is None:
                table_rows.append((benchmark, method, "", "", ""))
                continue
            rgr_cell = INAPPLICABLE_MARK if row.rgr is None else f"{row.rgr:.2f}"
            length_cell = "" if row.mean_length is None else f"{row.mean_length:.2f}"
            table_rows.append((benchmark, method, f"{row.pass_at_1:.2f}", rgr_cell, length_cell))

    out_dir.mkdir(parents=True, exist_ok=True)
    md_path = out_dir / f"{basename}.md"
    csv_path = out_dir / f"{basename}.csv"

    md_lines = [
        "| " + " | ".join(_COLUMNS) + " |",
        "| " + " | ".join("---" for _ in _COLUMNS) + " |",
    ]
    for cells in table_rows:
        md_lines.append("| " + " | ".join(cells) + " |")
    md_path.write_text("\n".join(md_lines) + "\n", encoding="utf-8")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_COLUMNS)
    writer.writerows(table_rows)
    csv_path.write_text(buffer.getvalue(), encoding="utf-8")

    return ReportPaths(markdown=md_path, csv=csv_path, warnings=tuple(warnings))


def load_tallies(path: Path) -> list[SampleTally]:
    """Read sample tallies from JSONL lines of {problem_id, n, c}."""
    tallies = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            tallies.append(SampleTally(problem_id=str(raw["problem_id"]), n=raw["n"], c=raw["c"]))
    return tallies


def save_tallies(tallies: list[SampleTally], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for tally in tallies:
            handle.write(
                json.dumps({"problem_id": tally.problem_id, "n": tally.n, "c": tally.c}) + "\n"
            )
