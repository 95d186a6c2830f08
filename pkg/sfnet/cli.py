"""Command-line entry point: synth, train, eval, map, bench, gradcheck and convert."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .bench import DENSE_TOLERANCE, run_bench
from .config import Settings
from .data.convert import PRESETS, convert_arrays
from .data.raster import read_raster, write_raster
from .data.split import stratified_split
from .data.synth import synth_generate
from .errors import EXIT_NUMERIC, EXIT_OK, SfNetError, UsageError, exit_code_for
from .gradcheck import SUITES, run_gradcheck
from .model.backbone import SfNetModel
from .model.checkpoint import load_checkpoint
from .tensor.core import Precision
from .training.maps import export_map
from .training.trainer import build_dataset, evaluate, prepare_pipeline, train

logger = logging.getLogger("sfnet.cli")


def _setup_logging(log_level: str = "info") -> None:
    """Install one stderr handler on the package logger."""
    root = logging.getLogger("sfnet")
    level = getattr(logging, log_level.upper(), logging.INFO)
    for handler in list(root.handlers):
        if getattr(handler, "_sfnet_cli", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler._sfnet_cli = True  # type: ignore[attr-defined]
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # Registered on the root parser and on every subcommand so they may appear on either side.
    default = argparse.SUPPRESS if suppress else None
    parent = _Parser(add_help=False)
    parent.add_argument("--seed", type=int, default=default)
    parent.add_argument("--precision", choices=[p.value for p in Precision], default=default)
    parent.add_argument("--config", default=default, help="YAML or JSON config file")
    parent.add_argument("--log-level", default=default, choices=["debug", "info", "warning", "error"])
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfnet", description="Sparse focus network for HSI + SAR/LiDAR classification",
                     parents=[_global_options(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_options(suppress=True)]

    p = sub.add_parser("synth", parents=common, help="write a synthetic SFNR scene")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--bands", type=int)
    p.add_argument("--aux-channels", type=int)
    p.add_argument("--noise", type=float)

    p = sub.add_parser("train", parents=common, help="train on an SFNR scene, write SFNM + history CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--pca", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--ablate-aux", action="store_true", default=None)

    p = sub.add_parser("eval", parents=common, help="print the metrics report of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--metrics-csv")
    p.add_argument("--metrics-json")
    p.add_argument("--ablate-aux", action="store_true", default=None)

    p = sub.add_parser("map", parents=common, help="export a PPM classification map")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("bench", parents=common, help="time sparse branches against dense attention")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--warmup", type=int)

    p = sub.add_parser("gradcheck", parents=common, help="finite-difference gradient suites")
    p.add_argument("--suite", action="append", choices=list(SUITES))
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-coords", type=int, default=6)
    p.add_argument("--step", type=float, default=1e-5, help="central-difference step h")

    p = sub.add_parser("convert", parents=common, help="convert .npy scene dumps to SFNR")
    p.add_argument("--hsi", required=True)
    p.add_argument("--aux", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    names = p.add_mutually_exclusive_group(required=True)
    names.add_argument("--preset", choices=sorted(PRESETS))
    names.add_argument("--class-names", help="comma-separated class names")
    p.add_argument("--channels-first", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    get = lambda name: getattr(args, name, None)
    data: dict[str, Any] = {
        "seed": get("seed"),
        "precision": get("precision"),
        "log_level": get("log_level"),
        "model": {"patch_size": get("patch_size"), "pca_components": get("pca"), "token_dim": get("dim")},
        "train": {
            "epochs": get("epochs"),
            "batch_size": get("batch_size"),
            "learning_rate": get("lr"),
            "train_fraction": get("train_fraction"),
            "ablate_aux": get("ablate_aux"),
            "eval_workers": get("workers"),
        },
        "synth": {
            "n_classes": get("classes"),
            "height": get("height"),
            "width": get("width"),
            "bands": get("bands"),
            "aux_channels": get("aux_channels"),
            "noise": get("noise"),
        },
        "bench": {"n_tokens": get("n"), "width": get("d"), "iters": get("iters"), "warmup": get("warmup")},
    }
    return data


def load_settings(args: argparse.Namespace) -> Settings:
    config = getattr(args, "config", None)
    base = Settings.from_file(config) if config else Settings.build({})
    return base.merged(_overrides(args))


def _cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    s = settings.synth
    raster = synth_generate(s.n_classes, s.height, s.width, s.bands, s.aux_channels, s.seed, s.noise)
    write_raster(raster, args.out)
    print(f"wrote {args.out} ({s.height}x{s.width}, {s.bands} bands, {s.aux_channels} aux, {s.n_classes} classes)")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    raster = read_raster(args.data)
    history_path = args.history or str(Path(args.out).with_suffix(".history.csv"))
    cfg = settings.train.model_copy(update={"checkpoint_path": args.out, "history_path": history_path})
    model = prepare_pipeline(raster, settings.model)
    dataset = build_dataset(model, raster, cfg.ablate_aux)
    split = stratified_split(raster.labels, cfg.train_fraction, cfg.seed)
    history = train(model, dataset, split, cfg)
    print(history.to_csv(), end="")
    metrics = evaluate(model, dataset, split, cfg.eval_workers, raster.class_names)
    print(metrics.report())
    return EXIT_OK


def _eval_split(args: argparse.Namespace, settings: Settings, model: SfNetModel) -> tuple[int, float]:
    """Seed and train fraction for evaluation: command line, then checkpoint, then settings."""
    cfg = settings.train
    seed, fraction, source = cfg.seed, cfg.train_fraction, "settings"
    if model.split_seed is not None:
        seed, fraction, source = model.split_seed, model.train_fraction, "checkpoint"
    if getattr(args, "seed", None) is not None:
        seed, source = args.seed, "cli"
    if getattr(args, "train_fraction", None) is not None:
        fraction, source = args.train_fraction, "cli"
    logger.info("eval.split seed=%d fraction=%s source=%s", seed, fraction, source)
    return seed, fraction


def _cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    model = load_checkpoint(args.model)
    raster = read_raster(args.data)
    cfg = settings.train
    dataset = build_dataset(model, raster, cfg.ablate_aux)
    seed, fraction = _eval_split(args, settings, model)
    split = stratified_split(raster.labels, fraction, seed)
    metrics = evaluate(model, dataset, split, cfg.eval_workers, raster.class_names)
    metrics.write(args.metrics_csv, args.metrics_json)
    print(metrics.report())
    return EXIT_OK


def _cmd_map(args: argparse.Namespace, settings: Settings) -> int:
    model = load_checkpoint(args.model)
    raster = read_raster(args.data)
    export_map(model, raster, args.out, settings.train.eval_workers)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    report = run_bench(settings.bench, settings.model.precision, settings.model.seed)
    print(report.render())
    if not report.matches_dense:
        print(f"sfnet: error: alpha=1 branch deviates from dense attention by {report.dense_deviation:.3e}"
              f" (tolerance {DENSE_TOLERANCE:g})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    report = run_gradcheck(
        seed=settings.model.seed, tol=args.tol, h=args.step, max_coords=args.max_coords, suites=args.suite
    )
    print(report.render())
    if not report.passed:
        print("sfnet: error: gradient check failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_convert(args: argparse.Namespace, settings: Settings) -> int:
    if args.preset:
        names = PRESETS[args.preset]
    else:
        names = [n.strip() for n in args.class_names.split(",") if n.strip()]
    raster = convert_arrays(args.hsi, args.aux, args.labels, names, args.out, channels_last=not args.channels_first)
    print(f"wrote {args.out} ({raster.height}x{raster.width}, {raster.bands} bands, {raster.aux_channels} aux)")
    return EXIT_OK


COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "map": _cmd_map,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
    "convert": _cmd_convert,
}


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings(args)
        _setup_logging(settings.log_level)
        print(settings.effective_json())
        logger.debug("cli.run command=%s", args.command)
        return COMMANDS[args.command](args, settings)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SfNetError, OSError) as exc:
        code = exit_code_for(exc)
        logger.debug("cli.error type=%s code=%d", type(exc).__name__, code)
        print(f"sfnet: error: {exc}", file=sys.stderr)
        return code


def main() -> None:
    sys.exit(run())
