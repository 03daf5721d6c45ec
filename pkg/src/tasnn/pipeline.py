"""Stage functions shared by the CLI and programmatic runs.

synth -> extract -> train -> eval, each driven by one ``RunConfig``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os

import numpy as np
import torch

from tasnn import arrayio
from tasnn.corpus import write_corpus
from tasnn.dataset import extract_corpus, load_features, split_by_origin
from tasnn.episodes import EmbeddingCache, EpisodeError, run_eval, variant_pair_probabilities
from tasnn.training import Trainer, build_model, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

REPORT_FORMAT = "tasnn-report/1"


class DataError(RuntimeError):
    """Missing, inconsistent or insufficient input data."""


def file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def synth(cfg, out_dir):
    return write_corpus(cfg.corpus_config(), out_dir)


def extract(cfg, corpus_dir, out_dir):
    try:
        return extract_corpus(corpus_dir, out_dir, cfg.extract_config())
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc


def features(feature_dir):
    try:
        return load_features(feature_dir)
    except (FileNotFoundError, arrayio.ContainerError, KeyError) as exc:
        raise DataError(f"cannot load features from {feature_dir}: {exc}") from exc


def split(cfg, fs):
    sc = cfg.split_config()
    return split_by_origin(fs, sc.eval_fraction, sc.seed)


def _extract_matches(cfg, fs):
    return fs.meta.get("extract") in (None, cfg.data["extract"])


def train(cfg, fs, checkpoint_path=None, resume=None, epochs=None):
    """Train on the training split of ``fs``; optionally resume and save.

    Returns the Trainer. ``epochs`` overrides the configured total.
    """
    if not _extract_matches(cfg, fs):
        raise DataError("feature set was extracted with different settings than the config")
    tr, te = split(cfg, fs)
    tcfg = cfg.train_config()
    if resume is not None:
        trainer = load_checkpoint(resume, tr)
        extra = getattr(trainer, "extra_meta", {})
        if extra.get("features_digest") not in (None, fs.digest()):
            raise DataError(f"{resume} was trained on different features")
        trainer.val_set = te
    else:
        model = build_model(cfg.model_config(len(tr.class_names)), tr)
        trainer = Trainer(model, tr, tcfg, val_set=te)
    trainer.fit(tcfg.epochs if epochs is None else epochs)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, trainer, checkpoint_meta(cfg, fs))
    return trainer


def checkpoint_meta(cfg, fs):
    return {"config_digest": cfg.stage_digest("train"), "features_digest": fs.digest(),
            "run_config": cfg.to_dict()}


def loss_curve(trainer):
    return {"train": trainer.history["train"], "val": trainer.history["val"]}


def check_checkpoint(trainer, cfg, fs, force=False):
    """Refuse a checkpoint produced from other features or another config."""
    extra = getattr(trainer, "extra_meta", {}) or {}
    problems = []
    if extra.get("features_digest") != fs.digest():
        problems.append("features digest")
    if extra.get("config_digest") != cfg.stage_digest("train"):
        problems.append("config digest")
    if problems and not force:
        raise DataError("checkpoint does not match the current " + " and ".join(problems)
                        + " (use --force to evaluate anyway)")
    return problems


def evaluate(cfg, model, fs, checkpoint_digest=None):
    """Evaluation report over the configured (n_way, k_shot) grid, as a dict."""
    ecfg = cfg.eval_config()
    _, te = split(cfg, fs)
    model.eval()
    cache = EmbeddingCache(model, te)
    cells = []
    for n_way, k_shot in ecfg.cells():
        try:
            rep = run_eval(te, model, n_way, k_shot, ecfg.episodes, cfg.seeds.eval,
                           ecfg.query_task, cache, ecfg.support_task)
        except EpisodeError as exc:
            raise DataError(f"eval cell {n_way}-way {k_shot}-shot is infeasible: {exc}") from exc
        cells.append(rep.to_dict())
    variants = {}
    for prov in ("shuffle", "junk", "split"):
        p = variant_pair_probabilities(model, fs, prov)
        if len(p):
            variants[prov] = {"pairs": int(len(p)),
                              "mean_probability": float(np.mean(p)),
                              "fraction_above_half": float(np.mean(p > 0.5))}
    return {
        "format": REPORT_FORMAT,
        "config_digest": cfg.stage_digest("eval"),
        "checkpoint_digest": checkpoint_digest,
        "features_digest": fs.digest(),
        "config": cfg.to_dict(),
        "cells": cells,
        "variants": variants,
    }


def dump_report(report):
    """Stable serialisation: insertion order is the field order."""
    return json.dumps(report, indent=2) + "\n"


def run_all(cfg, workdir):
    """synth -> extract -> train -> eval under ``workdir``; returns the report path."""
    corpus_dir = os.path.join(workdir, "corpus")
    feat_dir = os.path.join(workdir, "features")
    ckpt = os.path.join(workdir, "model.ckpt")
    synth(cfg, corpus_dir)
    fs = extract(cfg, corpus_dir, feat_dir)
    trainer = train(cfg, fs, ckpt)
    report = evaluate(cfg, trainer.model, fs, file_digest(ckpt))
    path = os.path.join(workdir, "metrics.json")
    arrayio.atomic_write_bytes(path, dump_report(report).encode())
    return path


def set_determinism():
    torch.use_deterministic_algorithms(True, warn_only=True)
