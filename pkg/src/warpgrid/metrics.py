"""Statistics, sensitivity, speedup, and report tables.

The sensitivity and speedup ratios are plain rational arithmetic and are
computed through Fraction so reference values reproduce to
floating-point exactness.  Report emitters produce aligned text and CSV
with fixed column orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .scenario import MISSILE_TYPE


@dataclass(slots=True)
class SampleSeries:
    values: list[float]
    label: str = ""

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("a sample series needs at least one value")


def mean(s: SampleSeries) -> float:
    return sum(s.values) / len(s.values)


def stddev(s: SampleSeries) -> float:
    """Population standard deviation (divisor n)."""
    m = mean(s)
    return math.sqrt(sum((x - m) ** 2 for x in s.values) / len(s.values))


def cv(s: SampleSeries) -> float:
    """Relative standard deviation as a percentage of the mean."""
    m = mean(s)
    if m == 0:
        raise ValueError("coefficient of variation undefined for zero mean")
    return (stddev(s) / m) * 100.0


# -- state aggregation ----------------------------------------------------

_SIDE_CODE = {"blue": 0, "red": 1}
_TYPE_CODE = {"ground_structure": 0, "aircraft": 1, "ground_force": 2,
              "vessel": 3, MISSILE_TYPE: 4}


def encode_state(state) -> tuple[float, float, float]:
    """(side, type, alive) numeric vector for one entity."""
    return (float(_SIDE_CODE[state.side]),
            float(_TYPE_CODE[state.entity_type]),
            1.0 if state.alive else 0.0)


def aggregate_state(states: Sequence) -> float:
    """Mean of per-entity means of min-max normalized state attributes.

    Each attribute is normalized across the population; an attribute that
    is constant over the population contributes 0 (the normalization would
    otherwise divide by zero).
    """
    if not states:
        raise ValueError("aggregate_state needs at least one entity")
    vectors = [encode_state(s) for s in states]
    lo = [min(v[i] for v in vectors) for i in range(3)]
    hi = [max(v[i] for v in vectors) for i in range(3)]
    total = 0.0
    for v in vectors:
        parts = []
        for i in range(3):
            span = hi[i] - lo[i]
            parts.append(0.0 if span == 0 else (v[i] - lo[i]) / span)
        total += sum(parts) / 3.0
    return total / len(vectors)


# -- sensitivity ------------------------------------------------------------

@dataclass(slots=True)
class SensitivityRecord:
    x1: int
    x2: int
    ycount1: float
    ycount2: float
    ystate1: float = 1.0
    ystate2: float = 1.0

    def __post_init__(self) -> None:
        if not (self.x2 > self.x1 > 0):
            raise ValueError("need x2 > x1 > 0")
        if self.ycount1 <= 0 or self.ystate1 <= 0:
            raise ValueError("baseline outputs must be positive")


def sensitivity(rec: SensitivityRecord) -> tuple[float, float]:
    """Relative output change per relative input change, exact ratios."""
    dx = Fraction(rec.x2 - rec.x1, rec.x1)
    s_count = ((Fraction(rec.ycount2) - Fraction(rec.ycount1)) / Fraction(rec.ycount1)) / dx
    s_state = ((Fraction(rec.ystate2) - Fraction(rec.ystate1)) / Fraction(rec.ystate1)) / dx
    return float(s_count), float(s_state)


# -- speedup and efficiency ---------------------------------------------------

def speedups(brute_serial: float, brute_parallel: float,
             neighbor_serial: float, neighbor_parallel: float) -> tuple[float, float, float]:
    """(brute speedup, neighbor speedup, neighbor-over-brute parallel ratio)."""
    for t in (brute_serial, brute_parallel, neighbor_serial, neighbor_parallel):
        if t <= 0:
            raise ValueError("times must be positive")
    return (brute_serial / brute_parallel,
            neighbor_serial / neighbor_parallel,
            brute_parallel / neighbor_parallel)


def efficiency(speedup: float, parallelism: int) -> float:
    if parallelism < 1:
        raise ValueError("parallelism degree must be >= 1")
    return speedup / parallelism


# -- report emission -------------------------------------------------------------

@dataclass(slots=True)
class ReportTable:
    title: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    footer: list[list] = field(default_factory=list)

    def with_totals(self, label: str = "SUM", skip: int = 1) -> "ReportTable":
        """Append a totals row summing numeric columns after `skip` labels."""
        if self.rows:
            totals: list = [label] + [""] * (skip - 1)
            for c in range(skip, len(self.columns)):
                vals = [r[c] for r in self.rows if isinstance(r[c], (int, float))]
                totals.append(sum(vals) if vals else "")
            self.footer.append(totals)
        return self


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_text(table: ReportTable) -> str:
    all_rows = [table.columns] + [[_fmt_cell(c) for c in r] for r in table.rows + table.footer]
    widths = [max(len(str(row[i])) for row in all_rows) for i in range(len(table.columns))]
    lines = [table.title, "-" * max(len(table.title), sum(widths) + 2 * (len(widths) - 1))]
    for r, row in enumerate(all_rows):
        lines.append("  ".join(str(c).rjust(widths[i]) for i, c in enumerate(row)))
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(widths))))
    return "\n".join(lines) + "\n"


def render_csv(table: ReportTable) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows + table.footer:
        writer.writerow([_fmt_cell(c) for c in row])
    return buf.getvalue()


def emit_report(table: ReportTable, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(table)
    if fmt == "csv":
        return render_csv(table)
    raise ValueError(f"unknown report format {fmt!r}")


def worker_events_table(stats: Iterable[dict], extra_columns: dict[str, list[int]] | None = None,
                        title: str = "Per-worker committed events") -> ReportTable:
    """Rank/Thread/Events layout, optionally with configuration columns."""
    columns = ["Rank", "Thread", "Events"]
    extra = extra_columns or {}
    columns += list(extra)
    table = ReportTable(title, columns)
    flat_index = 0
    for snap in stats:
        for w, n in enumerate(snap["committed"]):
            row = [snap["node"], w, n]
            for name in extra:
                row.append(extra[name][flat_index])
            table.rows.append(row)
            flat_index += 1
    return table.with_totals(skip=2)


def sensitivity_table(entries: list[tuple[int, str, float, float]]) -> ReportTable:
    """X / Mode / Y_count / Y_state / S_count layout with exact ratios."""
    table = ReportTable("Sensitivity analysis",
                        ["X", "Mode", "Y_count", "Y_state", "S_count", "S_state"])
    by_mode: dict[str, list[tuple[int, float, float]]] = {}
    for x, mode, ycount, ystate in entries:
        by_mode.setdefault(mode, []).append((x, ycount, ystate))
    for x, mode, ycount, ystate in entries:
        series = sorted(by_mode[mode])
        idx = next(i for i, item in enumerate(series) if item[0] == x)
        if idx + 1 < len(series):
            nxt = series[idx + 1]
            rec = SensitivityRecord(x, nxt[0], ycount, nxt[1], ystate, nxt[2])
            s_count, s_state = sensitivity(rec)
        else:
            s_count = s_state = ""
        table.rows.append([x, mode, ycount, ystate, s_count, s_state])
    return table
