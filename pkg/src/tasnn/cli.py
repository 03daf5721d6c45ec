"""Command-line entry point: ``tasnn synth|extract|augment|train|eval|plot``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
Default artifact locations live under ``$TASNN_CACHE_DIR`` (``~/.cache/tasnn``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from tasnn import __version__, arrayio, pipeline
from tasnn.config import ConfigError, RunConfig, cache_dir
from tasnn.features import AugmentationConfig, augment, draw_augmentation
from tasnn.training import NumericalError, load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("tasnn")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _shape(text):
    parts = text.lower().replace("x", ",").split(",")
    try:
        h, w = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    return [h, w]


def _config(args, fallback=None):
    """Config file (or ``fallback`` dict), then ``--set`` overrides."""
    if args.config:
        cfg = RunConfig.load(args.config)
    elif fallback is not None:
        cfg = RunConfig.from_dict(fallback)
    else:
        cfg = RunConfig()
    return cfg.with_overrides(args.set)


def _default_path(kind, cfg, suffix=""):
    return os.path.join(cache_dir(), f"{kind}-{cfg.stage_digest(kind)}{suffix}")


def _write_json(path, obj):
    arrayio.atomic_write_bytes(path, (json.dumps(obj, indent=2) + "\n").encode())


# -- subcommands ----------------------------------------------------------------

def cmd_synth(args):
    cfg = _config(args)
    cfg = cfg.updated("corpus", n_families=args.families, samples_per_family=args.samples,
                      transforms=args.transforms.split(",") if args.transforms else None)
    if args.seed is not None:
        cfg = cfg.updated("seeds", corpus=args.seed)
    out = args.out or _default_path("corpus", cfg)
    manifest = pipeline.synth(cfg, out)
    print(f"wrote {len(manifest['entries'])} programs from {len(manifest['families'])} "
          f"families to {out}")
    return EXIT_OK


def cmd_extract(args):
    cfg = _config(args)
    cfg = cfg.updated("extract", segment_length=args.segment_length, graph_shape=args.graph_shape,
                      image_width=args.image_width, encoder_seed=args.encoder_seed,
                      encoder_dim=args.encoder_dim)
    corpus = args.corpus or _default_path("corpus", cfg)
    out = args.out or _default_path("features", cfg)
    fs = pipeline.extract(cfg, corpus, out)
    print(f"extracted {len(fs)} samples to {out} (digest {fs.digest()})")
    return EXIT_OK


def cmd_augment(args):
    cfg = _config(args)
    fs = pipeline.features(args.features or _default_path("features", cfg))
    aug = AugmentationConfig()
    n = len(fs) if args.limit is None else min(args.limit, len(fs))
    rng = np.random.default_rng([args.seed, 0xA0])
    images, meta = [], []
    for i in range(n):
        for _ in range(args.copies):
            s = int(rng.integers(1 << 31))
            d = draw_augmentation(aug, s, fs.images[i].shape[0])
            images.append(augment(fs.images[i], aug, s).astype(np.float32))
            meta.append({"id": fs.ids[i], "seed": s, "angle": d.angle, "shift": d.shift,
                         "flip": d.flip})
    if not images:
        raise pipeline.DataError("nothing to augment")
    out = args.out or os.path.join(cache_dir(), "augmented.tsf")
    arrayio.save(out, {"images": np.stack(images)},
                 {"augmentation": aug.to_dict(), "draws": meta})
    print(f"wrote {len(images)} augmented images to {out}")
    return EXIT_OK


def _baseline(cfg):
    return cfg.updated("model", task_conditioning=False, beta=0.0, center_loss_weight=0.0)


def cmd_train(args):
    fallback = None
    if args.resume and not args.config:
        fallback = _checkpoint_config(args.resume)
    cfg = _config(args, fallback)
    if args.baseline:
        cfg = _baseline(cfg)
    if args.epochs is not None:
        cfg = cfg.updated("train", epochs=args.epochs)
    fs = pipeline.features(args.features or _default_path("features", cfg))
    out = args.out or _default_path("train", cfg, ".ckpt")
    trainer = pipeline.train(cfg, fs, out, resume=args.resume)
    curve_path = args.loss_curve or os.path.splitext(out)[0] + ".loss.json"
    _write_json(curve_path, pipeline.loss_curve(trainer))
    last = trainer.history["train"][-1]["loss"] if trainer.history["train"] else float("nan")
    print(f"trained to epoch {trainer.epoch} (step {trainer.step}), final train loss "
          f"{last:.4f}; checkpoint {out}; loss curve {curve_path}")
    return EXIT_OK


def _checkpoint_config(path):
    try:
        _, meta = arrayio.load(path)
    except FileNotFoundError as exc:
        raise pipeline.DataError(str(exc)) from exc
    cfg = (meta.get("extra") or {}).get("run_config") if isinstance(meta, dict) else None
    if cfg is None:
        raise ConfigError(f"{path} carries no run configuration; pass --config")
    return cfg


def cmd_eval(args):
    cfg = _config(args, None if args.config else _checkpoint_config(args.checkpoint))
    cfg = cfg.updated("eval", ways=args.ways, shots=args.shots, episodes=args.episodes)
    if args.seed is not None:
        cfg = cfg.updated("seeds", eval=args.seed)
    fs = pipeline.features(args.features or _default_path("features", cfg))
    trainer = load_checkpoint(args.checkpoint)
    skipped = pipeline.check_checkpoint(trainer, cfg, fs, force=args.force)
    if skipped:
        log.warning("evaluating despite mismatched %s", ", ".join(skipped))
    report = pipeline.evaluate(cfg, trainer.model, fs, pipeline.file_digest(args.checkpoint))
    out = args.out or _default_path("eval", cfg)
    os.makedirs(out, exist_ok=True)
    arrayio.atomic_write_bytes(os.path.join(out, "metrics.json"),
                               pipeline.dump_report(report).encode())
    from tasnn.plotting import report_series
    _write_json(os.path.join(out, "plot_data.json"), report_series(report))
    for cell in report["cells"]:
        print(f"{cell['n_way']}-way {cell['k_shot']}-shot: accuracy {cell['accuracy']:.1f}% "
              f"AUC {cell['auc']:.3f} confusion {cell['confusion']}")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_plot(args):
    from tasnn import plotting
    series = {}
    if args.report:
        with open(args.report) as fh:
            series.update(plotting.report_series(json.load(fh)))
    if args.loss_curve:
        with open(args.loss_curve) as fh:
            series.update(plotting.loss_series(json.load(fh)))
    if not series:
        raise ConfigError("plot needs --report and/or --loss-curve")
    out = args.out or os.path.join(cache_dir(), "plots")
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "series.json"), series)
    if args.render:
        try:
            paths = plotting.render(series, out)
        except ImportError as exc:
            raise ConfigError("--render needs matplotlib (pip install 'tasnn[plot]')") from exc
        print(f"rendered {len(paths)} figures to {out}")
    print(f"wrote {len(series)} series to {os.path.join(out, 'series.json')}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tasnn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tasnn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    s.add_argument("--out")
    s.add_argument("--families", type=int)
    s.add_argument("--samples", type=int, help="samples per family, variants included")
    s.add_argument("--transforms", help="comma-separated subset of shuffle,junk,split")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="compute entropy graphs and images")
    s.add_argument("--corpus", help="corpus directory or manifest.json")
    s.add_argument("--out")
    s.add_argument("--segment-length", type=int)
    s.add_argument("--graph-shape", type=_shape, metavar="HxW")
    s.add_argument("--image-width", type=int)
    s.add_argument("--encoder-seed", type=int)
    s.add_argument("--encoder-dim", type=int)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("augment", parents=[common], help="write augmented image samples")
    s.add_argument("--features")
    s.add_argument("--out")
    s.add_argument("--copies", type=int, default=1)
    s.add_argument("--limit", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", parents=[common], help="train a model")
    s.add_argument("--features")
    s.add_argument("--out", help="checkpoint path")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--epochs", type=int, help="total epochs (including resumed ones)")
    s.add_argument("--baseline", action="store_true",
                   help="plain Siamese network: no task conditioning, beta=0, lambda=0")
    s.add_argument("--loss-curve", help="where to write the per-epoch loss series")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="N-way K-shot evaluation")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--features")
    s.add_argument("--out", help="report directory")
    s.add_argument("--ways", type=_int_list)
    s.add_argument("--shots", type=_int_list)
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--force", action="store_true", help="ignore digest mismatches")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("plot", parents=[common], help="plot data series (optionally rendered)")
    s.add_argument("--report", help="metrics.json from eval")
    s.add_argument("--loss-curve")
    s.add_argument("--out")
    s.add_argument("--render", action="store_true", help="also draw PNGs with matplotlib")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tasnn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"tasnn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (pipeline.DataError, arrayio.ContainerError, OSError) as exc:
        print(f"tasnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"tasnn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
