"""Figures for training runs and fill sweeps, written next to their TSV data."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def figsize(scale=1.0, ratio=0.62):
    width = 6.0 * scale
    return (width, width * ratio)


def read_metrics_log(path: str | os.PathLike):
    """Parse a metrics log into ``(steps, losses)`` rows and eval rows."""
    steps, evals = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if not parts or not parts[0]:
                continue
            if parts[0] == "eval":
                evals.append((int(parts[1]), *map(float, parts[2:6])))
            else:
                steps.append((int(parts[0]), *map(float, parts[1:4])))
    return steps, evals


def _moving_average(values, window):
    out, acc = [], 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def plot_training(metrics_path, out_dir, window: int = 50) -> list[Path]:
    """Render ``loss.png`` and, when eval lines exist, ``valid_mrr.png``."""
    steps, evals = read_metrics_log(metrics_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        if steps:
            x = [s[0] for s in steps]
            for col, label in ((1, "total"), (2, "positive term"), (3, "negative term")):
                ax.plot(x, _moving_average([s[col] for s in steps], window), label=label, lw=1)
        ax.set_xlabel("step")
        ax.set_ylabel(f"loss (moving average, {window} steps)")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out / "loss.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
        if evals:
            fig, ax = plt.subplots(figsize=figsize())
            x = [e[0] for e in evals]
            ax.plot(x, [e[1] for e in evals], marker="o", label="MRR")
            for col, n in ((2, 1), (3, 3), (4, 10)):
                ax.plot(x, [e[col] for e in evals], ls="--", lw=1, label=f"Hits@{n}")
            ax.set_xlabel("step")
            ax.set_ylabel("filtered validation metric")
            ax.set_ylim(0, 1)
            ax.legend(frameon=False)
            fig.tight_layout()
            path = out / "valid_mrr.png"
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
    return written


def plot_fill(rows, path, title: str = "") -> Path:
    """``rows`` are ``(k, percent)`` pairs; the y axis is logarithmic."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ks = [r[0] for r in rows]
        pct = [r[1] for r in rows]
        ax.plot(ks, pct, marker="o")
        if all(p > 0 for p in pct):
            ax.set_yscale("log")
        ax.set_xticks(ks)
        ax.set_xlabel("k (hop radius)")
        ax.set_ylabel("filled entries (%)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
