"""Checkpoint evaluation under branch-selection and forced-branch modes.

Modes: SELECT (per-slice branch choice by style distance), FORCE_* (pin
one branch), ENSEMBLE_AVG (average both branches' soft predictions
before argmax). Emits per-case and overall CSV rows plus, for SELECT,
a per-slice selection report CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import torch

from dnseg.config import TrainConfig
from dnseg.data import Split, load_split
from dnseg.domains import BRANCHES, DomainTag
from dnseg.metrics import evaluate_pair
from dnseg.selection import SelectionReport, select_batch
from dnseg.training import _csv_float, load_checkpoint, train
from dnseg.unet import SegNet

OVERALL = "overall"


class EvalMode(str, Enum):
    SELECT = "select"
    FORCE_SIMILAR = "force-similar"
    FORCE_DISSIMILAR = "force-dissimilar"
    ENSEMBLE_AVG = "ensemble-avg"

    @classmethod
    def parse(cls, value) -> "EvalMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("_", "-"))


@dataclass
class EvalResult:
    run_id: str
    mode: EvalMode
    csv_rows: list[str]
    mean_dice: float
    mean_hd: float
    selection_fraction: dict[DomainTag, float] | None
    reports: list[tuple[str, int, SelectionReport]]
    metrics_csv: Path | None
    selection_csv: Path | None


def _predict_case(net: SegNet, x: torch.Tensor, mode: EvalMode, volume_vote: bool):
    reports: list[SelectionReport] = []
    with torch.no_grad():
        if mode is EvalMode.SELECT:
            probs, reports = select_batch(net, x)
            if volume_vote:
                votes = sum(1 for r in reports if r.chosen is DomainTag.DISSIMILAR)
                # majority of per-slice choices; SIMILAR wins exact ties
                branch = (
                    DomainTag.DISSIMILAR
                    if votes * 2 > len(reports)
                    else DomainTag.SIMILAR
                )
                probs = net(x, branch)
        elif mode is EvalMode.FORCE_SIMILAR:
            probs = net(x, DomainTag.SIMILAR)
        elif mode is EvalMode.FORCE_DISSIMILAR:
            probs = net(x, DomainTag.DISSIMILAR)
        elif mode is EvalMode.ENSEMBLE_AVG:
            probs = (net(x, DomainTag.SIMILAR) + net(x, DomainTag.DISSIMILAR)) / 2.0
        else:
            raise ValueError(f"unknown evaluation mode {mode!r}")
    return probs.argmax(dim=1).numpy(), reports


def evaluate(
    checkpoint,
    target_archive,
    mode,
    out_dir=None,
    run_id: str = "run",
    split: Split = Split.TEST,
    volume_vote: bool = False,
) -> EvalResult:
    """Score a checkpoint on one split of a target archive."""
    mode = EvalMode.parse(mode)
    if isinstance(checkpoint, SegNet):
        net = checkpoint
    else:
        net, _ = load_checkpoint(checkpoint)
    net.eval()
    torch.set_num_threads(1)

    manifest, samples = load_split(target_archive, split)
    if not samples:
        raise ValueError(f"target archive has no slices in split {split.value!r}")
    num_classes = manifest.num_classes
    spacing = manifest.spacing

    by_case: dict[str, list] = {}
    for s in samples:
        by_case.setdefault(s.case_id, []).append(s)

    case_dice: dict[str, dict[int, float]] = {}
    case_hd: dict[str, dict[int, float]] = {}
    all_reports: list[tuple[str, int, SelectionReport]] = []
    for case_id, case_samples in by_case.items():
        x = torch.from_numpy(
            np.stack([s.image for s in case_samples]).astype(np.float32)
        ).unsqueeze(1)
        pred, reports = _predict_case(net, x, mode, volume_vote)
        for s, r in zip(case_samples, reports):
            all_reports.append((case_id, s.slice_index, r))
        dice_acc: dict[int, list[float]] = {c: [] for c in range(1, num_classes)}
        hd_acc: dict[int, list[float]] = {c: [] for c in range(1, num_classes)}
        for i, s in enumerate(case_samples):
            res = evaluate_pair(pred[i], s.label, num_classes, spacing)
            for c in range(1, num_classes):
                dice_acc[c].append(res.per_class_dice[c])
                hd_acc[c].append(res.per_class_hd[c])
        case_dice[case_id] = {c: float(np.mean(v)) for c, v in dice_acc.items()}
        case_hd[case_id] = {c: float(np.mean(v)) for c, v in hd_acc.items()}

    rows = ["run_id,mode,case_id,class,dice_pct,hd_mm"]
    for case_id in case_dice:
        for c in range(1, num_classes):
            rows.append(
                f"{run_id},{mode.value},{case_id},{c},"
                f"{_csv_float(case_dice[case_id][c])},{_csv_float(case_hd[case_id][c])}"
            )
    overall_dice = {}
    overall_hd = {}
    for c in range(1, num_classes):
        overall_dice[c] = float(np.mean([case_dice[cid][c] for cid in case_dice]))
        overall_hd[c] = float(np.mean([case_hd[cid][c] for cid in case_hd]))
        rows.append(
            f"{run_id},{mode.value},{OVERALL},{c},"
            f"{_csv_float(overall_dice[c])},{_csv_float(overall_hd[c])}"
        )

    fraction = None
    if mode is EvalMode.SELECT:
        total = len(all_reports)
        fraction = {
            b: sum(1 for _, _, r in all_reports if r.chosen is b) / total for b in BRANCHES
        }

    metrics_csv = selection_csv = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_csv = out_dir / f"metrics_{mode.value}.csv"
        metrics_csv.write_text("\n".join(rows) + "\n", encoding="utf-8")
        if mode is EvalMode.SELECT:
            selection_csv = out_dir / "selection.csv"
            write_selection_csv(all_reports, selection_csv)

    return EvalResult(
        run_id=run_id,
        mode=mode,
        csv_rows=rows,
        mean_dice=float(np.mean(list(overall_dice.values()))),
        mean_hd=float(np.mean(list(overall_hd.values()))),
        selection_fraction=fraction,
        reports=all_reports,
        metrics_csv=metrics_csv,
        selection_csv=selection_csv,
    )


def write_selection_csv(reports: list[tuple[str, int, SelectionReport]], path) -> Path:
    """Per-slice selection dump: aggregates plus per-layer distance pairs."""
    path = Path(path)
    if not reports:
        raise ValueError("no selection reports to write")
    n_layers = len(reports[0][2].per_layer)
    header = ["case_id", "slice_index", "chosen", "dist_similar", "dist_dissimilar"]
    for layer in range(n_layers):
        header += [f"layer{layer}_similar", f"layer{layer}_dissimilar"]
    rows = [",".join(header)]
    for case_id, slice_index, r in reports:
        cells = [
            case_id,
            str(slice_index),
            r.chosen.value,
            _csv_float(r.dist_similar),
            _csv_float(r.dist_dissimilar),
        ]
        for _, w_sim, w_dis in r.per_layer:
            cells += [_csv_float(w_sim), _csv_float(w_dis)]
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def sweep_control_points(
    base_config: TrainConfig,
    source_archive,
    target_archives: dict[str, Path | str],
    out_dir,
    k_values=(1, 2, 3, 4, 5),
) -> dict[int, dict[str, float]]:
    """Train once per k and score SELECT mode on each target archive.

    Writes sweep.csv (k, target, mean_dice_pct, mean_hd_mm) and returns
    {k: {target_name: mean_dice}}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[int, dict[str, float]] = {}
    rows = ["k,target,mean_dice_pct,mean_hd_mm"]
    for k in k_values:
        config = replace(base_config, k=int(k)).validate()
        run_dir = out_dir / f"k{k}"
        trained = train(config, source_archive, run_dir)
        results[int(k)] = {}
        for name, archive in target_archives.items():
            res = evaluate(
                trained.checkpoint_path,
                archive,
                EvalMode.SELECT,
                out_dir=run_dir / name,
                run_id=f"k{k}_{name}",
            )
            results[int(k)][name] = res.mean_dice
            rows.append(
                f"{k},{name},{_csv_float(res.mean_dice)},{_csv_float(res.mean_hd)}"
            )
    (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return results
