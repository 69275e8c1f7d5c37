"""Training loop: style-augmented dual-branch optimization with Adam.

Every optimizer step draws one source batch, styles it into a
source-similar and a source-dissimilar batch (fresh random curves per
image), runs the network once per domain tag, and applies one step on
the summed soft Dice loss. The learning rate follows a polynomial decay
set manually before each step. Single-threaded torch keeps reruns
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from dnseg import bezier
from dnseg.config import TrainConfig, poly_lr
from dnseg.data import Split, geometric_augment, load_split
from dnseg.domains import DomainTag
from dnseg.metrics import combined_loss, one_hot, soft_dice_loss
from dnseg.unet import SegNet

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries epoch/step diagnostics."""


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_csv_path: Path
    epoch_mean_losses: list[float]


def _csv_float(x: float) -> str:
    # repr round-trips doubles exactly, keeping reruns byte-comparable
    return repr(float(x))


def build_network(config: TrainConfig) -> SegNet:
    torch.manual_seed(config.seed)
    return SegNet(
        num_classes=config.num_classes,
        depth=config.depth,
        base_channels=config.base_channels,
        alpha=config.alpha,
        eps=config.eps,
    )


def save_checkpoint(path, net: SegNet, config: TrainConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "model_state": net.state_dict(),
            "config": asdict(config),
            "seed": config.seed,
        },
        path,
    )
    return path


def load_checkpoint(path) -> tuple[SegNet, TrainConfig]:
    blob = torch.load(Path(path), map_location="cpu", weights_only=True)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')!r}")
    config = TrainConfig(**blob["config"])
    net = SegNet(
        num_classes=config.num_classes,
        depth=config.depth,
        base_channels=config.base_channels,
        alpha=config.alpha,
        eps=config.eps,
    )
    net.load_state_dict(blob["model_state"])
    net.eval()
    return net, config


def _style_batch(samples, bank, pick_rng):
    """One SIMILAR and one DISSIMILAR styled copy of each sample."""
    sim_imgs, dis_imgs = [], []
    for s in samples:
        mask = bezier.foreground_of(s.image)
        inc, dec = bank.draw()
        curve_s = inc[int(pick_rng.integers(len(inc)))]
        curve_d = dec[int(pick_rng.integers(len(dec)))]
        sim_imgs.append(bezier.apply_curve(s.image, curve_s, mask))
        dis_imgs.append(bezier.apply_curve(s.image, curve_d, mask))
    return sim_imgs, dis_imgs


def _to_tensors(images, samples, num_classes):
    x = torch.from_numpy(np.stack(images).astype(np.float32)).unsqueeze(1)
    y = torch.from_numpy(np.stack([s.label for s in samples]))
    return x, one_hot(y, num_classes)


def train(config: TrainConfig, source_archive, out_dir) -> TrainResult:
    """Train on the archive's TRAIN split; write checkpoint + loss CSV."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest, samples = load_split(source_archive, Split.TRAIN)
    if not samples:
        raise ValueError("source archive has no training slices")
    if manifest.num_classes != config.num_classes:
        raise ValueError(
            f"archive has {manifest.num_classes} classes, config says {config.num_classes}"
        )
    if manifest.shape != (config.image_size, config.image_size):
        raise ValueError(
            f"archive slices are {manifest.shape}, config.image_size is {config.image_size}"
        )

    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    net = build_network(config)
    net.train()
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr0)

    seq = np.random.SeedSequence(config.seed)
    order_rng, geom_rng, curve_rng, pick_rng = (
        np.random.default_rng(s) for s in seq.spawn(4)
    )
    bank = bezier.TransformBank(config.k, rng=curve_rng, lut_resolution=config.lut_resolution)

    steps_per_epoch = max(1, len(samples) // config.batch_size)
    max_iter = config.epochs * steps_per_epoch
    iteration = 0
    epoch_means: list[float] = []
    rows: list[str] = ["epoch,iter,lr,loss"]

    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(samples))
        losses = []
        for step in range(steps_per_epoch):
            idx = perm[step * config.batch_size : (step + 1) * config.batch_size]
            batch = [samples[i] for i in idx]
            if config.geometric_augment:
                batch = [geometric_augment(s, geom_rng) for s in batch]

            lr = poly_lr(config.lr0, iteration, max_iter, config.poly_power)
            for group in optimizer.param_groups:
                group["lr"] = lr

            if config.style_augment:
                sim_imgs, dis_imgs = _style_batch(batch, bank, pick_rng)
                x_ss, y_ss = _to_tensors(sim_imgs, batch, config.num_classes)
                x_sd, y_sd = _to_tensors(dis_imgs, batch, config.num_classes)
                pred_ss = net(x_ss, DomainTag.SIMILAR)
                pred_sd = net(x_sd, DomainTag.DISSIMILAR)
                loss = combined_loss(
                    pred_ss, y_ss, pred_sd, y_sd, config.include_background
                )
            else:
                # single-branch baseline: raw source batch, SIMILAR track only
                x, y = _to_tensors([s.image for s in batch], batch, config.num_classes)
                loss = soft_dice_loss(net(x, DomainTag.SIMILAR), y, config.include_background)

            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch} step {step} (lr={lr})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            rows.append(f"{epoch},{iteration},{_csv_float(lr)},{_csv_float(value)}")
            losses.append(value)
            iteration += 1
        epoch_means.append(float(np.mean(losses)))

    loss_csv = out_dir / "loss_curve.csv"
    loss_csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
    checkpoint = save_checkpoint(out_dir / "checkpoint.pt", net, config)
    return TrainResult(checkpoint, loss_csv, epoch_means)
