"""Benchmark report rendering: delimited tables plus figure files.

The bench command writes its measurements three ways: an aligned text
table on stdout, a CSV next to the requested output path, and a set of
PNG figures (wall time vs. workers, speedup curve, per-worker committed
events) for quick visual inspection.  matplotlib is imported lazily so
non-reporting commands stay light.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .metrics import ReportTable, emit_report


@dataclass(slots=True)
class BenchCell:
    label: str
    workers: int
    nodes: int
    search: str
    wall_seconds: float
    committed: int
    error: str = ""


@dataclass(slots=True)
class BenchReport:
    cells: list[BenchCell] = field(default_factory=list)

    def table(self) -> ReportTable:
        t = ReportTable("Benchmark results",
                        ["Cell", "Workers", "Nodes", "Search", "Wall(s)", "Committed", "Speedup", "Efficiency"])
        base = self._baseline()
        for c in self.cells:
            if c.error:
                t.rows.append([c.label, c.workers, c.nodes, c.search, "", "", "", f"error: {c.error}"])
                continue
            speedup = base.wall_seconds / c.wall_seconds if base and c.wall_seconds > 0 else 1.0
            lanes = max(1, c.workers * c.nodes)
            t.rows.append([c.label, c.workers, c.nodes, c.search,
                           round(c.wall_seconds, 4), c.committed,
                           round(speedup, 3), round(speedup / lanes, 3)])
        return t

    def _baseline(self) -> BenchCell | None:
        ok = [c for c in self.cells if not c.error]
        if not ok:
            return None
        return min(ok, key=lambda c: (c.workers * c.nodes, c.label))


def write_bench_outputs(report: BenchReport, out_dir: str | Path,
                        stem: str = "bench") -> list[Path]:
    """Write CSV and figures; returns the paths created."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(emit_report(report.table(), "csv"), encoding="utf-8")
    paths.append(csv_path)
    paths.extend(render_figures(report, out, stem))
    return paths


def render_figures(report: BenchReport, out_dir: Path, stem: str) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [c for c in report.cells if not c.error]
    paths: list[Path] = []
    if not ok:
        return paths

    by_lanes = sorted(ok, key=lambda c: c.workers * c.nodes)
    lanes = [c.workers * c.nodes for c in by_lanes]
    walls = [c.wall_seconds for c in by_lanes]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(lanes, walls, marker="o")
    ax.set_xlabel("parallel lanes (workers x nodes)")
    ax.set_ylabel("wall time (s)")
    ax.set_title("Simulation wall time")
    ax.grid(True, alpha=0.3)
    p = out_dir / f"{stem}_wall.png"
    fig.savefig(p, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)

    base = walls[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(lanes, [base / w if w else 0 for w in walls], marker="s", label="measured")
    ax.plot(lanes, lanes, linestyle="--", alpha=0.5, label="linear")
    ax.set_xlabel("parallel lanes")
    ax.set_ylabel("speedup vs smallest configuration")
    ax.set_title("Speedup")
    ax.legend()
    ax.grid(True, alpha=0.3)
    p = out_dir / f"{stem}_speedup.png"
    fig.savefig(p, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)
    return paths


def worker_load_figure(stats: list[dict], out_path: str | Path) -> Path:
    """Bar chart of per-worker committed events (load-balance inspection)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels, values = [], []
    for snap in stats:
        for w, n in enumerate(snap["committed"]):
            labels.append(f"{snap['node']}.{w}")
            values.append(n)
    fig, ax = plt.subplots(figsize=(max(4, len(labels) * 0.7), 4))
    ax.bar(labels, values, color="#4878a8")
    ax.set_xlabel("rank.worker")
    ax.set_ylabel("committed events")
    ax.set_title("Per-worker committed events")
    out = Path(out_path)
    fig.savefig(out, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return out
