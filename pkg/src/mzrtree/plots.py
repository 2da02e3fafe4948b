"""Static figures rendered from benchmark reports.

All functions write image files and return their paths; nothing is shown
interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bench import BenchReport

_ENGINE_COLORS = {
    "mzrtree": "#1f77b4",
    "full-scan": "#7f7f7f",
    "spectrum-major": "#ff7f0e",
    "column-major": "#2ca02c",
}


def _color(engine: str) -> str:
    return _ENGINE_COLORS.get(engine, "#9467bd")


def plot_access_times(report: BenchReport, path: str | Path) -> Path:
    """Grouped bars: mean access time per sweep, by workload and engine."""
    workloads = list(dict.fromkeys(r.workload for r in report.rows))
    engines = list(dict.fromkeys(r.engine for r in report.rows))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / len(engines)
    for j, engine in enumerate(engines):
        xs, ys = [], []
        for i, workload in enumerate(workloads):
            xs.append(i + (j - (len(engines) - 1) / 2) * width)
            ys.append(report.row(engine, workload).access_mean_s * 1e3)
        ax.bar(xs, ys, width=width, label=engine, color=_color(engine))
    ax.set_yscale("log")
    ax.set_xticks(range(len(workloads)))
    ax.set_xticklabels(workloads)
    ax.set_ylabel("access time per sweep (ms, log scale)")
    ax.set_title(f"Access times ({report.protocol['queries']} queries per sweep)")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def plot_load_times(report: BenchReport, path: str | Path) -> Path:
    """Mean load time per engine."""
    engines = list(dict.fromkeys(r.engine for r in report.rows))
    loads = [report.rows[[r.engine for r in report.rows].index(e)].load_mean_s * 1e3
             for e in engines]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(engines, loads, color=[_color(e) for e in engines])
    ax.set_ylabel("load time (ms)")
    ax.set_title("Load times")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def plot_density_sweep(reports: list[BenchReport], path: str | Path,
                       engine: str = "mzrtree") -> Path:
    """Access time per workload and load time versus dataset density."""
    reports = sorted(reports, key=lambda r: r.store["density"])
    densities = [r.store["density"] * 100 for r in reports]
    workloads = list(dict.fromkeys(r.workload for r in reports[0].rows))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for workload in workloads:
        ys = [r.row(engine, workload).access_mean_s * 1e3 for r in reports]
        ax.plot(densities, ys, marker="o", label=f"access: {workload}")
    loads = [
        next(row for row in r.rows if row.engine == engine).load_mean_s * 1e3
        for r in reports
    ]
    ax.plot(densities, loads, marker="s", linestyle="--", color="black",
            label="load")
    ax.set_xlabel("density (%)")
    ax.set_ylabel("time (ms, log scale)")
    ax.set_yscale("log")
    ax.set_title(f"{engine} scalability with density")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path
