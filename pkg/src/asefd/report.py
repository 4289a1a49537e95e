"""Figure rendering for sweep reports, signal comparisons, training curves,
and cost tables. Everything writes PNG files next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import METRIC_NAMES, EvalReport, display_rate
from .preprocess import Frame

_FRONT_END_STYLE = {"original": "--o", "ase": "-s"}


def save_metric_curves(reports: list[EvalReport], out_dir) -> list[Path]:
    """One figure per metric: mean value vs sampling rate, one line per
    classifier x front-end combination."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = sorted({(r.classifier, r.front_end) for r in reports})
    paths = []
    for metric in METRIC_NAMES:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for classifier, front_end in groups:
            pts = sorted(
                [
                    (r.rate_hz, getattr(r.mean_metrics, metric))
                    for r in reports
                    if r.classifier == classifier and r.front_end == front_end
                ]
            )
            pts = [(x, y) for x, y in pts if y is not None]
            if not pts:
                continue
            xs, ys = zip(*pts)
            style = _FRONT_END_STYLE.get(front_end, "-x")
            ax.plot(xs, ys, style, label=f"{classifier} ({front_end})", markersize=4)
        ax.set_xscale("log", base=2)
        rates = sorted({r.rate_hz for r in reports})
        ax.set_xticks(rates)
        ax.set_xticklabels([display_rate(r) for r in rates], rotation=45, fontsize=8)
        ax.set_xlabel("sampling rate (Hz)")
        ax.set_ylabel(metric.upper())
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"fig_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def save_signal_comparison(
    path,
    lr_frame: Frame,
    enhanced: Frame,
    hr_frame: Frame | None = None,
) -> Path:
    """Per-axis overlay of the low-rate input, the reconstruction, and
    optionally the full-rate reference."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
    names = ("x", "y", "z")
    for k, ax in enumerate(axes):
        t_lr = np.arange(lr_frame.per_axis_len) / lr_frame.source_rate_hz
        ax.step(t_lr, lr_frame.values[k], where="post", color="0.6",
                label=f"input ({display_rate(lr_frame.source_rate_hz)} Hz)")
        t_enh = np.arange(enhanced.per_axis_len) / enhanced.source_rate_hz
        ax.plot(t_enh, enhanced.values[k], "-", color="tab:blue", lw=1.0, label="enhanced")
        if hr_frame is not None:
            t_hr = np.arange(hr_frame.per_axis_len) / hr_frame.source_rate_hz
            ax.plot(t_hr, hr_frame.values[k], "-", color="tab:orange", lw=0.8,
                    alpha=0.7, label="full rate")
        ax.set_ylabel(names[k])
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=8, ncol=3)
    axes[-1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_training_curve(path, train_mae: list[float], val_mae: list[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(train_mae) + 1)
    ax.plot(epochs, train_mae, label="train MAE")
    ax.plot(epochs, val_mae, label="validation MAE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MAE")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_fold_accuracy(path, report: EvalReport) -> Path:
    """Per-fold accuracy bars for one LOSO run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    subjects = [f.test_subject for f in report.folds]
    values = [f.metrics.acc if f.metrics.acc is not None else 0.0 for f in report.folds]
    ax.bar(subjects, values, color="tab:blue")
    if report.mean_metrics.acc is not None:
        ax.axhline(report.mean_metrics.acc, color="tab:red", ls="--", lw=1,
                   label=f"mean = {report.mean_metrics.acc:.3f}")
        ax.legend(fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("held-out subject")
    ax.set_ylabel("accuracy")
    ax.set_title(f"{report.classifier} / {report.front_end} @ "
                 f"{display_rate(report.rate_hz)} Hz")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_cost_curves(path, rows: list[dict]) -> Path:
    """Battery life and response time vs sampling rate, per count source."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    sources = sorted({row["source"] for row in rows})
    for source in sources:
        sub = sorted((r["rate_hz"], r) for r in rows if r["source"] == source)
        rates = [r for r, _ in sub]
        ax1.plot(rates, [d["battery_life_h"] for _, d in sub], "-o", ms=4, label=source)
        ax2.plot(rates, [d["response_time_s"] for _, d in sub], "-o", ms=4, label=source)
    for ax, ylabel in ((ax1, "battery life (h)"), (ax2, "response time (s)")):
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("sampling rate (Hz)")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
