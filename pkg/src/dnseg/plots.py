"""Static figure emission from CSV results and augmentation previews."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from dnseg import bezier
from dnseg.evaluation import OVERALL

_METRICS = [("dice_pct", "Dice (%)"), ("hd_mm", "Hausdorff (mm)")]


def read_metric_rows(csv_paths) -> list[dict[str, str]]:
    rows: list[dict[str, str]] = []
    for path in csv_paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"run_id", "mode", "case_id", "class", "dice_pct", "hd_mm"} - set(
                reader.fieldnames or []
            )
            if missing:
                raise ValueError(f"{path}: missing CSV columns {sorted(missing)}")
            rows.extend(reader)
    return rows


def plot_metric_bars(csv_paths, out_dir) -> list[Path]:
    """One grouped bar chart per metric: x = run/mode, bars = classes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in read_metric_rows(csv_paths) if r["case_id"] == OVERALL]
    if not rows:
        raise ValueError("no aggregate rows found in metrics CSV")
    groups = sorted({(r["run_id"], r["mode"]) for r in rows})
    classes = sorted({int(r["class"]) for r in rows})
    outputs = []
    for column, label in _METRICS:
        fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(groups), 4.0))
        width = 0.8 / len(classes)
        xs = np.arange(len(groups))
        for ci, cls in enumerate(classes):
            values = []
            for g in groups:
                vals = [
                    float(r[column])
                    for r in rows
                    if (r["run_id"], r["mode"]) == g and int(r["class"]) == cls
                ]
                values.append(vals[0] if vals else np.nan)
            offset = (ci - (len(classes) - 1) / 2) * width
            ax.bar(xs + offset, values, width=width, label=f"class {cls}")
        ax.set_xticks(xs)
        ax.set_xticklabels([f"{rid}\n{mode}" for rid, mode in groups], fontsize=8)
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = out_dir / f"{column}.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        outputs.append(out)
    return outputs


def plot_loss_curve(loss_csv, out_path) -> Path:
    iters, losses = [], []
    with open(loss_csv, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            iters.append(int(row["iter"]))
            losses.append(float(row["loss"]))
    if not iters:
        raise ValueError(f"{loss_csv}: no loss rows")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, losses, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_augment_preview(sample, bank: bezier.TransformBank, out_path) -> Path:
    """Original slice plus its k+1 similar and k+1 dissimilar styled copies."""
    augmented = bezier.augment_sample(sample, bank)
    half = len(augmented) // 2
    cols = half + 1
    fig, axes = plt.subplots(2, cols, figsize=(2.0 * cols, 4.4))
    axes[0, 0].imshow(sample.image, cmap="gray", vmin=-1, vmax=1)
    axes[0, 0].set_title("source", fontsize=8)
    axes[1, 0].axis("off")
    for i, (aug, tag) in enumerate(augmented):
        row, col = (0, 1 + i) if i < half else (1, 1 + i - half)
        axes[row, col].imshow(aug.image, cmap="gray", vmin=-1, vmax=1)
        axes[row, col].set_title(tag.value, fontsize=8)
    for ax in axes.ravel():
        ax.set_xticks([])
        ax.set_yticks([])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
