"""``kneedet`` command line: detect, eval, split, synth, train-toy, render.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numeric fault.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .configs import index_anchors, toy_cfg
from .data import format_folds, kfold_split, load_index, read_labels, synth_generate
from .data.pgm import read_pgm_raw
from .engine import forward
from .errors import KneedetError, NumericFaultError
from .evaluation import evaluate
from .geometry import norm_to_abs
from .loss import LossWeights, TrainHyperparams, format_history, train_toy
from .model import load_weights, parse_cfg, save_weights, serialize_cfg
from .postprocess import DEFAULT_CONF, DEFAULT_NMS, detect, format_detections, grids_from_config, parse_detections
from .render import render_overlay

log = logging.getLogger("kneedet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path: Path, data: bytes | str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str | Path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p.read_bytes()


def _unit(lo_open: bool, hi_open: bool):
    def check(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if (v <= 0 if lo_open else v < 0) or (v >= 1 if hi_open else v > 1):
            lo, hi = "(" if lo_open else "[", ")" if hi_open else "]"
            raise argparse.ArgumentTypeError(f"{v} outside {lo}0, 1{hi}")
        return v

    return check


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be finite and >= 0, got {text}")
    return v


def _fit(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resize of ``(H, W)`` to the network input size."""
    h, w = img.shape
    if (h, w) == (height, width):
        return img
    ys = (np.arange(height) * h) // height
    xs = (np.arange(width) * w) // width
    return img[ys][:, xs]


def _pred_name(image_path: str) -> Path:
    return Path(image_path).with_suffix(".txt")


# ---------------------------------------------------------------- subcommands


def cmd_detect(args) -> int:
    cfg = parse_cfg(_read(args.cfg).decode())
    model = load_weights(cfg, _read(args.weights))
    grids = grids_from_config(cfg)
    if cfg.channels != 1:
        raise UsageError(f"cfg expects {cfg.channels} input channels; PGM input is single-channel")
    jobs: list[tuple[Path, Path]] = []
    if args.index:
        index = load_index(_read(args.index).decode(), Path(args.index).parent)
        jobs = [(index.resolve(r.image_path), _pred_name(r.image_path)) for r in index.records]
    for item in args.images or []:
        p = Path(item)
        files = sorted(p.glob("*.pgm")) if p.is_dir() else [p]
        jobs += [(f, Path(f.stem + ".txt")) for f in files]
    if not jobs:
        raise UsageError("nothing to do: give --images and/or --index")
    out = Path(args.out)
    for src, name in jobs:
        raw, maxval = read_pgm_raw(_read(src))
        x = _fit(raw, cfg.width, cfg.height)[None].astype(np.float64) / maxval
        dets = detect(forward(model, x), grids, raw.shape[1], raw.shape[0], args.conf, args.nms)
        write_atomic(out / name, format_detections(dets))
        log.info("%s: %d detections", src, len(dets))
    return EXIT_OK


def cmd_eval(args) -> int:
    index = load_index(_read(args.index).decode(), Path(args.index).parent, check_images=False)
    pred_dir = Path(args.preds)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {pred_dir}")
    wanted = {_pred_name(r.image_path) for r in index.records}
    present = {p.relative_to(pred_dir) for p in pred_dir.rglob("*.txt")}
    missing, extra = sorted(wanted - present), sorted(present - wanted)
    if missing or extra:
        detail = [f"missing predictions for {len(missing)} image(s), e.g. {missing[0]}"] if missing else []
        detail += [f"{len(extra)} prediction file(s) not in the index, e.g. {extra[0]}"] if extra else []
        raise KneedetError("prediction and index image sets differ: " + "; ".join(detail))
    preds, gts = [], []
    for r in index.records:
        preds.append(parse_detections((pred_dir / _pred_name(r.image_path)).read_text()))
        raw, _ = read_pgm_raw(_read(index.resolve(r.image_path)))
        h, w = raw.shape
        gts.append([(c, norm_to_abs(b, w, h)) for c, b in r.annotations])
    report = evaluate(preds, gts, args.iou)
    text = report.to_json()
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_split(args) -> int:
    index = load_index(_read(args.index).decode(), Path(args.index).parent, check_images=False)
    text = format_folds(kfold_split(index, args.folds, args.seed))
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    index, _ = synth_generate(args.n, args.size, args.seed, out_dir=args.out)
    log.info("wrote %d images to %s", len(index), args.out)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    index = load_index(_read(args.index).decode(), Path(args.index).parent)
    if len(index) == 0:
        raise KneedetError("training index is empty")
    samples = []
    first, _ = read_pgm_raw(_read(index.resolve(index.records[0].image_path)))
    if args.cfg:
        cfg = parse_cfg(_read(args.cfg).decode())
    else:
        size = first.shape[1]
        cfg = parse_cfg(toy_cfg(size, index_anchors(index, size, k=3, seed=args.seed)))
    for r in index.records:
        raw, maxval = read_pgm_raw(_read(index.resolve(r.image_path)))
        if raw.shape != (cfg.height, cfg.width):
            raise KneedetError(f"{r.image_path}: image is {raw.shape[1]}x{raw.shape[0]}, network expects {cfg.width}x{cfg.height}")
        samples.append((raw[None].astype(np.float64) / maxval, r.annotations))
    hp = TrainHyperparams(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr)
    weights = LossWeights(args.w_box, args.w_obj, args.w_noobj, args.w_cls)
    model, history = train_toy(samples, cfg, hp, seed=args.seed, weights=weights)
    out = Path(args.out)
    write_atomic(out / "model.cfg", serialize_cfg(cfg))
    write_atomic(out / "model.weights", save_weights(model))
    write_atomic(out / "loss.csv", format_history(history))
    return EXIT_OK


def cmd_render(args) -> int:
    raw, maxval = read_pgm_raw(_read(args.image))
    h, w = raw.shape
    if args.dets:
        boxes = [(d.class_id, d.box) for d in parse_detections(_read(args.dets).decode())]
    elif args.labels:
        boxes = [(c, norm_to_abs(b, w, h)) for c, b in read_labels(_read(args.labels).decode())]
    else:
        boxes = []
    write_atomic(Path(args.out), render_overlay(raw, maxval, boxes))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kneedet", description="Knee-joint detection toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="run a model over PGM images and write detection files")
    d.add_argument("--cfg", required=True)
    d.add_argument("--weights", required=True)
    d.add_argument("--images", nargs="+", help="PGM files or directories of them")
    d.add_argument("--index", help="index CSV; outputs mirror its image paths")
    d.add_argument("--conf", type=_unit(True, False), default=DEFAULT_CONF, help="score threshold (default %(default)s)")
    d.add_argument("--nms", type=_unit(True, True), default=DEFAULT_NMS, help="NMS IoU threshold (default %(default)s)")
    d.add_argument("--out", required=True, help="output directory")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score a directory of detection files against an index")
    e.add_argument("--preds", required=True, help="directory written by detect --index")
    e.add_argument("--index", required=True)
    e.add_argument("--iou", type=_unit(True, False), default=0.5, help="match IoU threshold (default %(default)s)")
    e.add_argument("--out", help="JSON report path (default stdout)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("split", help="patient-grouped, gender-stratified k-fold assignment")
    s.add_argument("--index", required=True)
    s.add_argument("--folds", type=_positive, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="fold CSV path (default stdout)")
    s.set_defaults(func=cmd_split)

    y = sub.add_parser("synth", help="generate a synthetic PGM corpus")
    y.add_argument("--n", type=int, default=250)
    y.add_argument("--size", type=int, default=128)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True, help="output directory")
    y.set_defaults(func=cmd_synth)

    t = sub.add_parser("train-toy", help="train a small network from scratch on an index")
    t.add_argument("--index", required=True)
    t.add_argument("--cfg", help="network cfg (default: built-in toy network with k-means anchors)")
    t.add_argument("--epochs", type=_positive, default=48)
    t.add_argument("--batch", type=_positive, default=32)
    t.add_argument("--lr", type=_nonneg_float, default=0.001)
    t.add_argument("--seed", type=int, default=0)
    for term in ("box", "obj", "noobj", "cls"):
        t.add_argument(f"--w-{term}", type=_nonneg_float, default=1.0, help=f"{term} loss weight (default %(default)s)")
    t.add_argument("--out", required=True, help="output directory for model.cfg, model.weights, loss.csv")
    t.set_defaults(func=cmd_train_toy)

    r = sub.add_parser("render", help="draw boxes over a PGM image and write a PPM")
    r.add_argument("--image", required=True)
    src = r.add_mutually_exclusive_group()
    src.add_argument("--dets", help="detection file (pixel boxes)")
    src.add_argument("--labels", help="label file (normalized boxes)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kneedet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFaultError as exc:
        print(f"kneedet: numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KneedetError, OSError, ValueError) as exc:
        print(f"kneedet: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
