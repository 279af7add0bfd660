"""Figures and tables from simulator runs."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from statistics import mean

from ..s3 import EngineConfig
from .capture import Capture
from .clocks import ENGINE_FREQUENCIES, ClockConfig
from .sim import run_trace
from .trace import ACTIVE, CycleTrace


@dataclass(frozen=True)
class LatencyRow:
    engine_freq: int
    service: str
    count: int
    mean_cycles: float
    min_cycles: float
    max_cycles: float
    activity: float


def latency_table(cfg: EngineConfig, capture: Capture, freqs=ENGINE_FREQUENCIES) -> tuple[list[LatencyRow], dict[int, CycleTrace]]:
    rows, traces = [], {}
    for f in freqs:
        trace = run_trace(cfg, ClockConfig(f), capture).trace
        traces[f] = trace
        for service in ("Read", "Write"):
            idx = trace.requests(service)
            if not idx:
                continue
            lat = [trace.latency(i) for i in idx]
            act = mean(trace.activity(trace.window(i)) for i in idx)
            rows.append(LatencyRow(f, service, len(idx), mean(lat), min(lat), max(lat), act))
    return rows, traces


def write_table(rows: list[LatencyRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["engine_freq", "service", "count", "mean_cycles", "min_cycles", "max_cycles", "activity"])
        for r in rows:
            w.writerow([r.engine_freq, r.service, r.count, f"{r.mean_cycles:.2f}", f"{r.min_cycles:.2f}", f"{r.max_cycles:.2f}", f"{r.activity:.4f}"])


def activity_profile(trace: CycleTrace, window: tuple[int, int], bins: int = 100) -> tuple[list[str], list[list[float]]]:
    """Per unit, the active fraction of each of ``bins`` slices of ``window``."""
    c0, c1 = window
    edges = [c0 + (c1 - c0) * k // bins for k in range(bins + 1)]
    rows = []
    for u in trace.units:
        row = []
        for a, b in zip(edges, edges[1:]):
            row.append(trace._count(u, ACTIVE, a, b) / (b - a) if b > a else 0.0)
        rows.append(row)
    return trace.units, rows


def plot_activity(trace: CycleTrace, index: int, path: str | os.PathLike) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    window = trace.window(index)
    units, rows = activity_profile(trace, window)
    fig, ax = plt.subplots(figsize=(9, 0.45 * len(units) + 1.5))
    ax.imshow(rows, aspect="auto", cmap="Greys", vmin=0, vmax=1, interpolation="nearest",
              extent=(window[0], window[1], len(units) - 0.5, -0.5))
    ax.set_yticks(range(len(units)), units)
    ax.set_xlabel("memory cycle")
    m = trace.markers[index]
    ax.set_title(f"{m.service} at engine {trace.clocks.engine_freq}: average activity {trace.activity(window):.1%}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_latency(rows: list[LatencyRow], path: str | os.PathLike) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for service, marker in (("Read", "o"), ("Write", "s")):
        pts = [(r.engine_freq, r.mean_cycles) for r in rows if r.service == service]
        if pts:
            ax.plot(*zip(*pts), marker=marker, label=service)
    ax.set_xlabel("engine frequency (memory fixed at 100)")
    ax.set_ylabel("latency [memory cycles]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(cfg: EngineConfig, capture: Capture, outdir: str | os.PathLike) -> dict[str, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows, traces = latency_table(cfg, capture)
    files = {"table": out / "latency.csv", "latency": out / "latency.png"}
    write_table(rows, files["table"])
    plot_latency(rows, files["latency"])
    top = traces[max(traces)]
    reads = top.requests("Read")
    if reads:
        files["activity"] = out / "activity.png"
        plot_activity(top, reads[0], files["activity"])
    return files
