"""Command-line entry point.

Exit codes: 0 success, 1 configuration error (or a failed check), 2 I/O or
file format error.  Diagnostics go to stderr, results to stdout or files.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .ablation import ablation_matrix, format_matrix, parse_axis
from .config import ModelConfig, apply_setting, format_config, load_config
from .data import bright_quadrant, load_dataset, save_ppm_dir
from .errors import ConfigError, FormatError, IianetError, LoadError
from .explain import grad_cam, render_pgm
from .gradcheck import TOLERANCE, gradcheck_suite
from .model import build, load_checkpoint, load_params, save_checkpoint
from .profile import profile
from .training import evaluate, train

DEFAULT_AXES = ["variant=a,b,c,d,e", "registers=0,1,2,4"]


def _config(args) -> ModelConfig:
    if args.config:
        return load_config(args.config, args.set)
    config = ModelConfig()
    for ov in args.set or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must be key=value")
        apply_setting(config, *ov.split("=", 1))
    return config.validate()


def _header(args, config: ModelConfig) -> None:
    print(f"# iianet {args.command}")
    print(f"# config: {args.config or '<default>'}")
    for ov in args.set or []:
        print(f"# set {ov}")
    for line in format_config(config).splitlines():
        print(f"#   {line}")


def _dataset(args, config: ModelConfig, source: str, seed: int):
    return load_dataset(source, size=config.input_size, seed=seed, n=args.samples)


def cmd_profile(args) -> int:
    config = _config(args)
    _header(args, config)
    rep = profile(config, args.input_size)
    print(rep.table(detail=args.detail))
    for line in rep.calibration_lines():
        print(line)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(args.seed)
    width = max(map(len, results))
    for name, err in results.items():
        print(f"{name:<{width}}  {err:.3e}  {'ok' if err < TOLERANCE else 'FAIL'}")
    worst = max(results.values())
    print(f"max relative error {worst:.3e} (tolerance {TOLERANCE:g})")
    return 0 if worst < TOLERANCE else 1


def cmd_train(args) -> int:
    config = _config(args)
    _header(args, config)
    data = _dataset(args, config, args.data, args.data_seed)
    if data.num_classes != config.num_classes:
        raise ConfigError(f"dataset has {data.num_classes} classes but num_classes = {config.num_classes}")
    eval_data = _dataset(args, config, args.eval_data, args.data_seed + 1) if args.eval_data else None
    store, model = build(config, args.seed)
    if args.metrics:
        Path(args.metrics).unlink(missing_ok=True)

    def report(rows):
        for r in rows:
            print(f"epoch {r['epoch']:4d} {r['split']:<5} loss {r['loss']:.6f} top1 {r['top1']:.4f}")

    train(model, data, args.epochs, args.batch_size, args.seed, args.lr, args.weight_decay,
          eval_dataset=eval_data, metrics_path=args.metrics, on_epoch=report)
    if args.checkpoint:
        save_checkpoint(store, args.checkpoint)
    return 0


def _restore(args):
    config = _config(args)
    store, model = build(config, args.seed)
    if args.checkpoint:
        load_params(model, load_checkpoint(args.checkpoint))
    return config, model


def cmd_eval(args) -> int:
    config, model = _restore(args)
    _header(args, config)
    data = _dataset(args, config, args.data, args.data_seed)
    loss, acc, _ = evaluate(model, data)
    print(f"loss {loss:.6f} top1 {acc:.4f} n {len(data)}")
    return 0


def cmd_gradcam(args) -> int:
    config, model = _restore(args)
    _header(args, config)
    data = _dataset(args, config, args.data, args.data_seed)
    if not 0 <= args.index < len(data):
        raise ConfigError(f"image index {args.index} outside dataset of {len(data)}")
    cls = int(data.labels[args.index]) if args.target_class is None else args.target_class
    hm = grad_cam(model, data.images[args.index], cls)
    render_pgm(hm, args.out)
    r, c = hm.argmax()
    print(f"heatmap {hm.shape[0]}x{hm.shape[1]} layer {hm.layer} class {cls} argmax ({r}, {c}) -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    data = bright_quadrant(args.samples, args.size, args.data_seed)
    save_ppm_dir(data, args.out)
    print(f"wrote {len(data)} images of {args.size}x{args.size} to {args.out}")
    return 0


def cmd_ablation(args) -> int:
    config = _config(args)
    _header(args, config)
    axes = dict(parse_axis(a) for a in (args.axis or DEFAULT_AXES))
    cells = ablation_matrix(config, axes, forward=not args.no_forward, seed=args.seed)
    print(format_matrix(cells))
    return 0 if all(c.ok for c in cells) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iianet", description="iiANET reference implementation")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=False):
        sp.add_argument("--config", help="config file (key = value lines)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, applied in order")
        sp.add_argument("--seed", type=int, default=0)
        if data:
            sp.add_argument("--data", default="synth", help="'synth' or a directory of class subfolders")
            sp.add_argument("--data-seed", type=int, default=0)
            sp.add_argument("--samples", type=int, default=64, help="synthetic sample count")

    sp = sub.add_parser("profile", help="parameter/FLOP report")
    common(sp)
    sp.add_argument("--input-size", type=int)
    sp.add_argument("--detail", action="store_true")
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("train", help="train on a dataset")
    common(sp, data=True)
    sp.add_argument("--eval-data")
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--batch-size", type=int, default=16)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--weight-decay", type=float, default=0.05)
    sp.add_argument("--metrics", help="CSV metrics output")
    sp.add_argument("--checkpoint", help="checkpoint output")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, data=True)
    sp.add_argument("--checkpoint")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcam", help="Grad-CAM heatmap for one image")
    common(sp, data=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--class", dest="target_class", type=int)
    sp.add_argument("--out", default="heatmap.pgm")
    sp.set_defaults(func=cmd_gradcam)

    sp = sub.add_parser("synth-data", help="write the bright-quadrant set as PPM files")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int, default=64)
    sp.add_argument("--size", type=int, default=32)
    sp.add_argument("--data-seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ablation", help="variant/ratio/heads/registers build matrix")
    common(sp)
    sp.add_argument("--axis", action="append", help="name=v1,v2 (variant, ratio, heads, registers, register_mode)")
    sp.add_argument("--no-forward", action="store_true")
    sp.set_defaults(func=cmd_ablation)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, LoadError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except IianetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
