"""CSV tables and figures for scoring and benchmarking runs."""

from __future__ import annotations

import csv
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRIC_NAMES, FrameScore  # noqa: E402

METRIC_LABELS = {
    "dice": "Dice",
    "hausdorff_mm": "Hausdorff (mm)",
    "mad_mm": "MAD (mm)",
    "dfpd": "DFPD",
    "dfnd": "DFND",
}


def write_scores_csv(scores: list[FrameScore], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("frame_index",) + METRIC_NAMES)
        for s in scores:
            d = asdict(s)
            w.writerow([s.frame_index] + [repr(float(d[m])) for m in METRIC_NAMES])


def write_summary_csv(summary: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("metric", "mean", "std"))
        for name, (m, s) in summary.items():
            w.writerow((name, repr(m), repr(s)))


def plot_metric_boxes(scores: list[FrameScore], path, title: str = "") -> None:
    """One box plot per metric with the mean marked by a star."""
    fig, axes = plt.subplots(1, len(METRIC_NAMES), figsize=(3 * len(METRIC_NAMES), 3.4))
    for ax, name in zip(axes, METRIC_NAMES):
        v = np.array([getattr(s, name) for s in scores])
        ax.boxplot(v, widths=0.5)
        ax.plot([1], [v.mean()], "k*", markersize=9)
        ax.set_title(METRIC_LABELS[name])
        ax.set_xticks([])
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_per_frame(scores: list[FrameScore], path, sources=None) -> None:
    """Dice and Hausdorff against frame index; frames tracked from a cluster seed are marked."""
    idx = np.array([s.frame_index for s in scores])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    a1.plot(idx, [s.dice for s in scores], "-", color="tab:blue")
    a1.set_ylabel("Dice")
    a2.plot(idx, [s.hausdorff_mm for s in scores], "-", color="tab:red")
    a2.set_ylabel("Hausdorff (mm)")
    a2.set_xlabel("frame")
    if sources:
        for i in idx:
            if sources.get(int(i)) == "cluster":
                for ax in (a1, a2):
                    ax.axvline(i, color="0.6", lw=0.8, ls="--")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def timing_stats(times_s) -> dict[str, float]:
    ms = 1000.0 * np.asarray(times_s, dtype=float)
    mean = float(ms.mean())
    return {
        "frames": float(ms.size),
        "mean_ms": mean,
        "std_ms": float(ms.std()),
        "p95_ms": float(np.percentile(ms, 95)),
        "max_ms": float(ms.max()),
        "fps": 1000.0 / mean if mean > 0 else float("inf"),
    }


def write_timings_csv(runs: dict[int, list[float]], path) -> None:
    """Per-frame times (ms) for each thread count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("threads", "frame_index", "ms"))
        for threads, times in runs.items():
            for i, t in enumerate(times):
                w.writerow((threads, i, repr(1000.0 * t)))


def plot_timings(runs: dict[int, list[float]], path, budget_ms: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for threads, times in runs.items():
        ax.plot(1000.0 * np.asarray(times), lw=1, label=f"{threads} thread(s)")
    if budget_ms is not None:
        ax.axhline(budget_ms, color="k", ls=":", lw=1, label=f"{budget_ms:g} ms budget")
    ax.set_xlabel("frame")
    ax.set_ylabel("ms / frame")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
