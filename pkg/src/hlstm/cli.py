"""Command-line entry points: synth, train, eval, parse, reconstruct, gradcheck.

Exit codes: 0 success, 1 gradient check failed, 2 usage error, 3 missing
file, 4 malformed config or data, 5 checkpoint/config shape mismatch,
6 reconstruction impossible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import netpbm
from .config import PRESETS, ConfigError
from .dataio import read_dataset, synthetic_dataset, write_dataset
from .gradcheck import TOLERANCE, gradcheck_config, run_gradcheck
from .model import HLSTM
from .mslstm import RegionGraph, RelationGraphPrediction
from .reconstruct3d import ReconstructionError, export_obj, reconstruct
from .superpixel import load_map, oversegment, save_map
from .training import (CheckpointError, evaluate, load_checkpoint, save_checkpoint, train)

EXIT_GRADCHECK = 1
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_SHAPE = 5
EXIT_RECONSTRUCT = 6

log = logging.getLogger("hlstm")


class ShapeMismatch(ValueError):
    pass


def load_config(args):
    """Preset, then --config JSON overrides, then --seed / --d flags."""
    overrides = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "d", None) is not None:
        overrides["d"] = args.d
    try:
        return PRESETS[args.preset](**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _require(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    return path


def _check_scales(examples, cfg):
    scales = [rg.scale for rg in examples[0].graphs] if examples else []
    if [float(s) for s in scales] != [float(s) for s in cfg.scales]:
        raise ShapeMismatch(f"dataset scales {scales} do not match config scales {cfg.scales}")


def _model_from(args, cfg=None):
    return load_checkpoint(_require(args.checkpoint), cfg)


def cmd_synth(args):
    cfg = load_config(args)
    examples = synthetic_dataset(args.count, args.size, cfg.seed, tuple(cfg.scales),
                                 compactness=cfg.compactness, scale_means=cfg.scale_means)
    write_dataset(examples, args.out, extra_meta={"seed": cfg.seed, "size": args.size})
    print(json.dumps({"written": len(examples), "out": str(args.out)}))
    return 0


def cmd_train(args):
    cfg = load_config(args)
    examples, _ = read_dataset(_require(args.data))
    _check_scales(examples, cfg)
    model = HLSTM(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def checkpoint(epoch, history):
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            save_checkpoint(out / f"epoch{epoch + 1:04d}.ckpt", model)

    history = train(model, examples, args.epochs, callback=checkpoint)
    save_checkpoint(out / "model.ckpt", model)
    (out / "loss_log.json").write_text(history.to_json())
    print(json.dumps({"epochs": args.epochs, "final_loss": history.epoch_losses[-1],
                      "checkpoint": str(out / "model.ckpt")}))
    return 0


def cmd_eval(args):
    cfg = load_config(args) if args.config else None
    model = _model_from(args, cfg)
    examples, _ = read_dataset(_require(args.data))
    _check_scales(examples, model.config)
    print(json.dumps(evaluate(model, examples)))
    return 0


def _graphs_for(image, cfg):
    return [RegionGraph.build(oversegment(image, s, cfg.compactness, cfg.slic_iterations,
                                          cfg.scale_means)) for s in cfg.scales]


def cmd_parse(args):
    model = _model_from(args, load_config(args) if args.config else None)
    cfg = model.config
    image = netpbm.read_ppm(_require(args.image))
    if image.shape[0] != cfg.in_channels:
        raise ShapeMismatch(f"image has {image.shape[0]} channels, model expects {cfg.in_channels}")
    graphs = _graphs_for(image, cfg)
    out = model.predict(image, graphs)
    labels = np.argmax(out.surface_probs(), axis=0)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    name = args.name or Path(args.image).stem
    netpbm.write_pgm(dest / f"{name}.labels.pgm", labels)
    records = []
    for rg, probs in zip(graphs, out.relation_probs()):
        save_map(rg.spmap, dest / f"{name}.sp{rg.scale:g}.pgm")
        records += RelationGraphPrediction(rg.scale, rg.pairs, probs).records()
    (dest / f"{name}.relations.json").write_text(json.dumps(records))
    print(json.dumps({"labels": str(dest / f"{name}.labels.pgm"),
                      "relations": str(dest / f"{name}.relations.json")}))
    return 0


def cmd_reconstruct(args):
    """Pop-up model from the files ``parse`` wrote (finest scale relations)."""
    src = Path(args.parsed)
    name = args.name or Path(args.image).stem
    image = netpbm.read_ppm(_require(args.image))
    labels = netpbm.read_pgm(_require(src / f"{name}.labels.pgm")).astype(np.int64)
    records = json.loads(_require(src / f"{name}.relations.json").read_text())
    if not records:
        raise ReconstructionError("no relation predictions to fold along")
    finest = min(r["scale"] for r in records)
    rel = RelationGraphPrediction.from_records(records, finest)
    spmap = load_map(_require(src / f"{name}.sp{finest:g}.pgm"))
    if spmap.shape != labels.shape or labels.shape != image.shape[1:]:
        raise ShapeMismatch("image, label map and superpixel map disagree on the grid size")
    model = reconstruct(labels, rel, spmap, camera_height=args.camera_height)
    paths = export_obj(model, image, args.out, name)
    print(json.dumps({"planes": len(model.planes), "horizon": model.camera.horizon_row,
                      "files": [str(p) for p in paths]}))
    return 0


def cmd_gradcheck(args):
    cfg = gradcheck_config(args.d, args.seed or 0)
    report = run_gradcheck(args.d, args.size, args.seed or 0, config=cfg)
    print(json.dumps({"max_relative_error": report.overall, "worst": list(report.worst),
                      "per_parameter": report.max_error, "seconds": report.seconds}))
    return 0 if report.passed(TOLERANCE) else EXIT_GRADCHECK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of config fields overriding the preset")
    common.add_argument("--seed", type=int, help="seed for every random choice")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    common.add_argument("--epochs", type=int, default=200)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hlstm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--count", type=int, default=20)
    s.add_argument("--size", type=int, default=32)
    s.set_defaults(func=cmd_synth)
    s = sub.add_parser("train", parents=[common], help="train on a dataset directory")
    s.add_argument("data")
    s.add_argument("--d", type=int)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.set_defaults(func=cmd_train)
    s = sub.add_parser("eval", parents=[common], help="print metrics of a checkpoint on a dataset")
    s.add_argument("checkpoint")
    s.add_argument("data")
    s.set_defaults(func=cmd_eval)
    s = sub.add_parser("parse", parents=[common], help="label one PPM image")
    s.add_argument("checkpoint")
    s.add_argument("image")
    s.add_argument("--name")
    s.set_defaults(func=cmd_parse)
    s = sub.add_parser("reconstruct", parents=[common], help="pop-up OBJ from parse output")
    s.add_argument("image")
    s.add_argument("parsed", help="directory written by parse")
    s.add_argument("--name")
    s.add_argument("--camera-height", type=float, default=1.6)
    s.set_defaults(func=cmd_reconstruct)
    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--size", type=int, default=4)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (CheckpointError, ShapeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ReconstructionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RECONSTRUCT
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
