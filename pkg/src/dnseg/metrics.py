"""Soft Dice training loss and evaluation metrics (Dice %, Hausdorff mm).

The loss is differentiable everywhere thanks to its smoothing term and
is summed over the two augmented domains during training. Evaluation
metrics operate on hard label maps with explicit empty-set conventions,
since degenerate slices do occur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from dnseg import kernels

DICE_SMOOTH = 1e-5


def one_hot(labels: Tensor, num_classes: int) -> Tensor:
    """(N, H, W) integer labels -> (N, C, H, W) float one-hot."""
    if labels.dim() != 3:
        raise ValueError(f"expected (N, H, W) labels, got {tuple(labels.shape)}")
    return torch.nn.functional.one_hot(labels.long(), num_classes).permute(0, 3, 1, 2).float()


def soft_dice_loss(pred: Tensor, target: Tensor, include_background: bool = True) -> Tensor:
    """Mean over classes of 1 - (2 sum(p*g) + s) / (sum(p) + sum(g) + s).

    pred: (N, C, H, W) probabilities summing to 1 per pixel. target:
    one-hot of the same shape. Sums aggregate over batch and space, so
    the loss lies in [0, 1].
    """
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {tuple(pred.shape)} != target {tuple(target.shape)}")
    if pred.dim() != 4:
        raise ValueError(f"expected (N, C, H, W), got {tuple(pred.shape)}")
    with torch.no_grad():
        total = pred.sum(dim=1)
        if (total - 1.0).abs().max() > 1e-3:
            raise ValueError("pred pixels do not sum to 1 over classes")
    start = 0 if include_background else 1
    p = pred[:, start:]
    g = target[:, start:]
    dims = (0, 2, 3)
    inter = (p * g).sum(dim=dims)
    denom = p.sum(dim=dims) + g.sum(dim=dims)
    dice = (2.0 * inter + DICE_SMOOTH) / (denom + DICE_SMOOTH)
    return (1.0 - dice).mean()


def combined_loss(
    pred_ss: Tensor, y_ss: Tensor, pred_sd: Tensor, y_sd: Tensor,
    include_background: bool = True,
) -> Tensor:
    """Sum of the soft Dice losses of the two augmented-domain batches."""
    for name, val in [("pred_ss", pred_ss), ("y_ss", y_ss), ("pred_sd", pred_sd), ("y_sd", y_sd)]:
        if val is None:
            raise ValueError(f"missing domain batch: {name}")
    return soft_dice_loss(pred_ss, y_ss, include_background) + soft_dice_loss(
        pred_sd, y_sd, include_background
    )


def dice_coefficient(pred_labels, gt_labels, class_id: int) -> float:
    """Overlap percentage 100 * 2|P∩G| / (|P| + |G|).

    Both sets empty -> 100.0; exactly one empty -> 0.0.
    """
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ValueError("label map shapes differ")
    p = pred_labels == class_id
    g = gt_labels == class_id
    np_, ng = int(p.sum()), int(g.sum())
    if np_ == 0 and ng == 0:
        return 100.0
    if np_ == 0 or ng == 0:
        return 0.0
    return 100.0 * 2.0 * int((p & g).sum()) / (np_ + ng)


def boundary_points(mask: np.ndarray) -> np.ndarray:
    """Pixels of the mask whose 4-neighborhood leaves the mask.

    Erosion difference with the frame treated as background, so
    border-touching foreground pixels count as boundary.
    """
    m = np.asarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[1:-1, 1:-1]
        & padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return np.argwhere(m & ~interior)


def hausdorff_sentinel(shape: tuple[int, int], spacing: tuple[float, float]) -> float:
    """Image diagonal in mm: reported when exactly one mask is empty."""
    return math.hypot(shape[0] * spacing[0], shape[1] * spacing[1])


def hausdorff_distance(pred_labels, gt_labels, class_id: int, spacing=(1.0, 1.0)) -> float:
    """Symmetric Hausdorff distance between class boundaries, in mm.

    Both masks empty -> 0.0; exactly one empty -> the image-diagonal
    sentinel (see hausdorff_sentinel).
    """
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ValueError("label map shapes differ")
    sy, sx = float(spacing[0]), float(spacing[1])
    if sy <= 0 or sx <= 0:
        raise ValueError("spacing must be positive")
    p = pred_labels == class_id
    g = gt_labels == class_id
    if not p.any() and not g.any():
        return 0.0
    if not p.any() or not g.any():
        return hausdorff_sentinel(pred_labels.shape, (sy, sx))
    bp = boundary_points(p)
    bg = boundary_points(g)
    return max(
        kernels.directed_hausdorff(bp, bg, sy, sx),
        kernels.directed_hausdorff(bg, bp, sy, sx),
    )


@dataclass
class MetricResult:
    """Per-foreground-class Dice/HD plus their arithmetic means."""

    per_class_dice: dict[int, float]
    per_class_hd: dict[int, float]
    mean_dice: float
    mean_hd: float


def evaluate_pair(pred_labels, gt_labels, num_classes: int, spacing=(1.0, 1.0)) -> MetricResult:
    """Dice and HD for every foreground class of one slice."""
    dice = {}
    hd = {}
    for c in range(1, num_classes):
        dice[c] = dice_coefficient(pred_labels, gt_labels, c)
        hd[c] = hausdorff_distance(pred_labels, gt_labels, c, spacing)
    return MetricResult(
        per_class_dice=dice,
        per_class_hd=hd,
        mean_dice=float(np.mean(list(dice.values()))),
        mean_hd=float(np.mean(list(hd.values()))),
    )
