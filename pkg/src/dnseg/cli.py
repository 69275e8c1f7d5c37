"""Command-line surface: data generation, training, evaluation, figures.

Every subcommand writes a resolved-config snapshot (run_config.txt) next
to its outputs so a run can be replayed exactly. Exit codes: 0 success,
1 invalid usage or validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from dnseg import bezier
from dnseg.config import TrainConfig, config_from_mapping, config_to_text, load_config
from dnseg.data import ArchiveError, Split, generate_synthetic_benchmark, load_split
from dnseg.evaluation import EvalMode, evaluate, sweep_control_points
from dnseg.training import train


OUT_ROOT_ENV = "DNSEG_OUT_ROOT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = os.environ.get(OUT_ROOT_ENV, "")
        if not root:
            raise UsageError(f"--out is required (or set {OUT_ROOT_ENV})")
        out = Path(root) / args.subcommand
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path, subcommand: str, pairs: dict, config: TrainConfig | None = None):
    # "run." lines record the invocation; config_from_mapping ignores them,
    # so a snapshot with a train.* block replays as a config file.
    lines = [f"run.subcommand = {subcommand}"]
    for key, value in pairs.items():
        if value is None or value == "":
            continue
        lines.append(f"run.{key} = {value}")
    body = "\n".join(lines) + "\n"
    if config is not None:
        body += config_to_text(config)
    (out / "run_config.txt").write_text(body, encoding="utf-8")


def _overrides(args) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise UsageError(f"--set expects key=value, got {item!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def _resolve_config(args) -> TrainConfig:
    overrides = _overrides(args)
    if args.seed is not None:
        overrides["train.seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return config_from_mapping(overrides)


def _cmd_synth_data(args) -> None:
    out = _out_dir(args)
    path_a, path_b = generate_synthetic_benchmark(
        out,
        num_cases=args.cases,
        slices_per_case=args.slices,
        image_size=args.size,
        seed=args.seed,
    )
    _snapshot(out, "synth-data", dict(cases=args.cases, slices=args.slices, size=args.size, seed=args.seed, out=out))
    print(f"wrote {path_a}")
    print(f"wrote {path_b}")


def _cmd_augment_preview(args) -> None:
    from dnseg.plots import save_augment_preview

    out = _out_dir(args)
    _, samples = load_split(Path(args.archive), Split(args.split))
    if not samples:
        raise ValueError(f"no slices in split {args.split!r}")
    if not 0 <= args.index < len(samples):
        raise ValueError(f"--index {args.index} outside [0, {len(samples)})")
    bank = bezier.TransformBank(args.k, rng=np.random.default_rng(args.seed))
    png = save_augment_preview(samples[args.index], bank, out / "augment_preview.png")
    _snapshot(out, "augment-preview", dict(archive=args.archive, index=args.index, k=args.k, seed=args.seed, split=args.split))
    print(f"wrote {png}")


def _cmd_train(args) -> None:
    out = _out_dir(args)
    config = _resolve_config(args)
    _snapshot(out, "train", dict(archive=args.archive), config=config)
    result = train(config, Path(args.archive), out)
    print(f"wrote {result.checkpoint_path}")
    print(f"wrote {result.loss_csv_path}")
    print(f"final epoch mean loss: {result.epoch_mean_losses[-1]:.6f}")


def _cmd_eval(args) -> None:
    out = _out_dir(args)
    mode = EvalMode.parse(args.mode)
    result = evaluate(
        Path(args.checkpoint),
        Path(args.target),
        mode,
        out_dir=out,
        run_id=args.run_id,
        split=Split(args.split),
        volume_vote=args.volume_vote,
    )
    _snapshot(
        out,
        "eval",
        dict(
            checkpoint=args.checkpoint,
            target=args.target,
            mode=mode.value,
            split=args.split,
            run_id=args.run_id,
            volume_vote=args.volume_vote,
        ),
    )
    print(f"wrote {result.metrics_csv}")
    if result.selection_csv:
        print(f"wrote {result.selection_csv}")
    print(f"mean dice: {result.mean_dice:.2f}  mean hd: {result.mean_hd:.2f}")
    if result.selection_fraction is not None:
        for branch, frac in result.selection_fraction.items():
            print(f"chose {branch.value}: {100 * frac:.1f}% of slices")


def _cmd_select_debug(args) -> None:
    out = _out_dir(args)
    result = evaluate(
        Path(args.checkpoint),
        Path(args.target),
        EvalMode.SELECT,
        out_dir=out,
        run_id=args.run_id,
        split=Split(args.split),
    )
    _snapshot(
        out,
        "select-debug",
        dict(checkpoint=args.checkpoint, target=args.target, split=args.split, run_id=args.run_id),
    )
    print(f"wrote {result.selection_csv}")
    for case_id, idx, report in result.reports[:10]:
        print(
            f"{case_id}[{idx}] -> {report.chosen.value} "
            f"(similar {report.dist_similar:.4g}, dissimilar {report.dist_dissimilar:.4g})"
        )


def _cmd_sweep_k(args) -> None:
    out = _out_dir(args)
    config = _resolve_config(args)
    targets = {}
    for item in args.target:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--target expects name=path, got {item!r}")
        targets[name.strip()] = Path(path.strip())
    k_values = [int(v) for v in args.k_values.split(",") if v.strip()]
    if not k_values:
        raise UsageError("--k-values is empty")
    _snapshot(out, "sweep-k", dict(archive=args.archive, k_values=args.k_values), config=config)
    results = sweep_control_points(config, Path(args.archive), targets, out, k_values)
    print(f"wrote {out / 'sweep.csv'}")
    for k, per_target in results.items():
        summary = "  ".join(f"{name}: {dice:.2f}" for name, dice in per_target.items())
        print(f"k={k}  {summary}")


def _cmd_plot(args) -> None:
    from dnseg.plots import plot_loss_curve, plot_metric_bars

    out = _out_dir(args)
    wrote = []
    if args.metrics:
        wrote += plot_metric_bars([Path(p) for p in args.metrics], out)
    if args.loss:
        wrote.append(plot_loss_curve(Path(args.loss), out / "loss_curve.png"))
    if not wrote:
        raise UsageError("nothing to plot: pass --metrics and/or --loss")
    _snapshot(out, "plot", dict(metrics=";".join(args.metrics or []), loss=args.loss))
    for p in wrote:
        print(f"wrote {p}")


def build_parser() -> _Parser:
    parser = _Parser(prog="dnseg", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth-data", help="generate the paired synthetic archives")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--cases", type=int, default=25)
    p.add_argument("--slices", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("augment-preview", help="style-augmentation image grid")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=[s.value for s in Split], default="train")
    p.set_defaults(func=_cmd_augment_preview)

    p = sub.add_parser("train", help="train on an archive's TRAIN split")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None, help="override train.seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a target archive")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--mode", default="select", choices=[m.value for m in EvalMode])
    p.add_argument("--split", choices=[s.value for s in Split], default="test")
    p.add_argument("--run-id", default="run")
    p.add_argument("--volume-vote", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("select-debug", help="dump per-slice selection reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--split", choices=[s.value for s in Split], default="test")
    p.add_argument("--run-id", default="run")
    p.set_defaults(func=_cmd_select_debug)

    p = sub.add_parser("sweep-k", help="train/evaluate across control-point counts")
    p.add_argument("--archive", required=True)
    p.add_argument("--target", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--k-values", default="1,2,3,4,5")
    p.set_defaults(func=_cmd_sweep_k)

    p = sub.add_parser("plot", help="bar charts / loss curves from CSV")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<subcommand>)")
    p.add_argument("--metrics", action="append")
    p.add_argument("--loss")
    p.set_defaults(func=_cmd_plot)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArchiveError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
