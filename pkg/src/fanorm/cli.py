"""Command-line interface.

Subcommands: train, normalize, evaluate, inspect.  Exit codes: 0 on
success, 2 for usage or configuration errors, 3 for runtime failures
(missing files, diverged training, failed pairs).

Training is configured by key = value files ('#' starts a comment):

    patch_size = 64
    steps = 1500
    data_dir = data/train
    out_dir = runs/demo

Recognized keys: patch_size, batch_size, steps, learning_rate, seed,
epsilon_aug, latent_channels, extractor_weights, data_dir, out_dir.
Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .container import ContainerError, load_container
from .images import ImageFormatError, read_image, write_image
from .metrics import WINDOW_SIDECAR, evaluate_pairs
from .model import NormalizationModel
from .ops import ShapeError
from .trainer import TrainConfig, train

_CONFIG_TYPES = {
    "patch_size": int,
    "batch_size": int,
    "steps": int,
    "learning_rate": float,
    "seed": int,
    "epsilon_aug": float,
    "latent_channels": int,
    "extractor_weights": str,
    "data_dir": str,
    "out_dir": str,
}

_IMAGE_SUFFIXES = (".png", ".ppm")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def parse_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise UsageError(
                f"{path}:{lineno}: unknown key {key!r} (known: {', '.join(sorted(_CONFIG_TYPES))})"
            )
        if key in values:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        if not value:
            raise UsageError(f"{path}:{lineno}: empty value for {key!r}")
        try:
            values[key] = _CONFIG_TYPES[key](value)
        except ValueError:
            kind = _CONFIG_TYPES[key].__name__
            raise UsageError(f"{path}:{lineno}: {key} expects {kind}, got {value!r}") from None
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fanorm",
        description="Feature-steered color normalization of images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model on a directory of images")
    p_train.add_argument("--config", help="key = value configuration file")
    p_train.add_argument("--data-dir")
    p_train.add_argument("--out-dir")
    p_train.add_argument("--patch-size", type=int, dest="patch_size")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--steps", type=int)
    p_train.add_argument("--learning-rate", type=float, dest="learning_rate")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epsilon-aug", type=float, dest="epsilon_aug")
    p_train.add_argument("--latent-channels", type=int, dest="latent_channels")
    p_train.add_argument("--extractor-weights", dest="extractor_weights",
                         help="'tiny' or a weights-container path")

    p_norm = sub.add_parser("normalize", help="apply a trained model to images")
    p_norm.add_argument("--model", required=True, help="checkpoint container path")
    p_norm.add_argument("--input", required=True, help="image file or directory")
    p_norm.add_argument("--output", required=True, help="output file or directory")

    p_eval = sub.add_parser(
        "evaluate", help="score normalized images against references and originals"
    )
    p_eval.add_argument("--normalized", required=True, help="directory of normalized images")
    p_eval.add_argument("--reference", required=True,
                        help="directory of color-reference images")
    p_eval.add_argument("--originals", required=True,
                        help="directory of the images that were normalized")
    p_eval.add_argument("--out", help="write the report here instead of stdout")

    p_inspect = sub.add_parser("inspect", help="list the entries of a weights container")
    p_inspect.add_argument("--container", required=True)
    return parser


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _cmd_train(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    for key in _CONFIG_TYPES:
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    data_dir = values.pop("data_dir", None)
    out_dir = values.pop("out_dir", None)
    if data_dir is None:
        raise UsageError("data_dir is required (config key or --data-dir)")
    if out_dir is None:
        raise UsageError("out_dir is required (config key or --out-dir)")
    if not Path(data_dir).is_dir():
        raise UsageError(f"data_dir is not a directory: {data_dir}")
    try:
        config = TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    every = max(1, config.steps // 20)

    def progress(step, loss):
        if step % every == 0 or step == config.steps - 1:
            print(f"step {step + 1}/{config.steps}  loss {loss:.6e}")

    # anything train() raises happens before the first step: startup
    # validation (empty dataset, patch below the extractor minimum, bad
    # extractor container), not a runtime failure
    try:
        result = train(config, data_dir, out_dir, progress=progress)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if result.aborted:
        print(f"training aborted: {result.abort_reason}", file=sys.stderr)
        print(f"last-good checkpoint retained at {result.checkpoint_path}", file=sys.stderr)
        return 3
    print(
        f"trained {result.steps_run} steps on {result.train_count} images "
        f"({result.holdout_count} held out); final loss {result.final_loss:.6e}"
    )
    if result.holdout_loss is not None:
        print(f"holdout loss {result.holdout_loss:.6e}")
    print(f"checkpoint written to {result.checkpoint_path}")
    return 0


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def _normalize_one(model: NormalizationModel, in_path: Path, out_path: Path):
    x = read_image(in_path)
    out, (top, left) = model.normalize(x)
    write_image(out[0], out_path)
    in_h, in_w = x.shape[2], x.shape[3]
    return top, left, out.shape[2], out.shape[3], in_h, in_w


def _print_crop_once(printed: list, top, left, h, w, in_h, in_w):
    if printed:
        return
    printed.append(True)
    print(
        f"crop: {in_h - h} rows and {in_w - w} columns removed per image "
        f"(valid window starts at row {top}, column {left})"
    )


def _cmd_normalize(args) -> int:
    model = NormalizationModel.load(args.model)
    in_path, out_path = Path(args.input), Path(args.output)
    crop_printed = []
    if in_path.is_dir():
        files = sorted(
            p for p in in_path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not files:
            print(f"no .png or .ppm images in {in_path}", file=sys.stderr)
            return 3
        out_path.mkdir(parents=True, exist_ok=True)
        failures = 0
        windows = []
        for p in files:
            try:
                top, left, h, w, in_h, in_w = _normalize_one(model, p, out_path / p.name)
            except (ImageFormatError, ShapeError, ValueError, OSError) as exc:
                print(f"{p.name}: {exc}", file=sys.stderr)
                failures += 1
                continue
            _print_crop_once(crop_printed, top, left, h, w, in_h, in_w)
            windows.append(f"{p.name}\t{top}\t{left}\t{h}\t{w}")
        (out_path / WINDOW_SIDECAR).write_text("\n".join(windows) + "\n")
        print(f"normalized {len(files) - failures}/{len(files)} images into {out_path}")
        return 3 if failures else 0
    if not in_path.exists():
        raise FileNotFoundError(f"input image not found: {in_path}")
    top, left, h, w, in_h, in_w = _normalize_one(model, in_path, out_path)
    _print_crop_once(crop_printed, top, left, h, w, in_h, in_w)
    print(f"wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _image_names(d: Path) -> set:
    return {p.name for p in d.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES}


def _cmd_evaluate(args) -> int:
    norm_dir, ref_dir, orig_dir = Path(args.normalized), Path(args.reference), Path(args.originals)
    for d in (norm_dir, ref_dir, orig_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    if not (_image_names(norm_dir) & _image_names(ref_dir) & _image_names(orig_dir)):
        raise UsageError("no filenames common to all three directories")

    results = evaluate_pairs(norm_dir, ref_dir, orig_dir)
    for name, message in results.failures:
        print(f"{name}: {message}", file=sys.stderr)

    lines = ["pair_id\tssdh\tsdsim\tlab_volume"]
    for r in results.reports:
        lines.append(f"{r.pair_id}\t{r.ssdh:.6f}\t{r.sdsim:.6f}\t{r.lab_volume:.6f}")
    if results.mean is not None:
        lines.append("mean\t" + "\t".join(f"{v:.6f}" for v in results.mean))
        lines.append("std\t" + "\t".join(f"{v:.6f}" for v in results.std))
    report = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return 3 if results.failures else 0


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------

def _cmd_inspect(args) -> int:
    try:
        entries = load_container(args.container)
    except ContainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print("container version 1")
    print(f"entries {len(entries)}")
    for name, arr in entries.items():
        dims = "x".join(str(d) for d in arr.shape)
        print(
            f"{name}  {dims}  min {arr.min():.6g}  max {arr.max():.6g}  "
            f"mean {float(arr.mean(dtype='float64')):.6g}"
        )
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "normalize": _cmd_normalize,
    "evaluate": _cmd_evaluate,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ContainerError, ImageFormatError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
