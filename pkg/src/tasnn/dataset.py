"""Feature extraction over a corpus and the in-memory feature set."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from tasnn import arrayio
from tasnn.corpus import dump_json, load_manifest
from tasnn.features import (DEFAULT_GRAPH_SHAPE, DEFAULT_IMAGE_WIDTH, DEFAULT_SEGMENT_LENGTH,
                            FrozenEncoder, binary_to_image, entropy_graph, entropy_series)


@dataclass
class ExtractConfig:
    segment_length: int = DEFAULT_SEGMENT_LENGTH
    graph_shape: tuple = DEFAULT_GRAPH_SHAPE
    image_width: int = DEFAULT_IMAGE_WIDTH
    encoder_seed: int = 0
    encoder_dim: int = 256

    def __post_init__(self):
        self.graph_shape = tuple(int(v) for v in self.graph_shape)
        if self.segment_length < 1 or self.image_width < 1 or self.encoder_dim < 1:
            raise ValueError("segment_length, image_width and encoder_dim must be positive")
        if len(self.graph_shape) != 2 or min(self.graph_shape) < 1:
            raise ValueError("graph_shape must be two positive integers")

    def to_dict(self):
        return {"segment_length": self.segment_length, "graph_shape": list(self.graph_shape),
                "image_width": self.image_width, "encoder_seed": self.encoder_seed,
                "encoder_dim": self.encoder_dim}


@dataclass
class FeatureSet:
    ids: list
    families: list
    provenance: list
    origin: list
    images: np.ndarray          # (N, 105, 105), grayscale in [0, 255]
    task_features: np.ndarray   # (N, D) frozen-encoder outputs
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    @property
    def class_names(self):
        return sorted(set(self.families))

    def labels(self, class_names=None):
        names = class_names or self.class_names
        index = {n: i for i, n in enumerate(names)}
        return np.array([index[f] for f in self.families], dtype=np.int64)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda seq: [seq[i] for i in idx]  # noqa: E731
        return FeatureSet(pick(self.ids), pick(self.families), pick(self.provenance),
                          pick(self.origin), self.images[idx], self.task_features[idx],
                          dict(self.meta))

    def digest(self):
        h = hashlib.sha256()
        h.update(json.dumps([self.ids, self.families], sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.images, dtype=np.float32).tobytes())
        h.update(np.ascontiguousarray(self.task_features, dtype=np.float32).tobytes())
        return h.hexdigest()[:16]


def sample_features(data, cfg, encoder):
    """Entropy series, entropy graph, image and task feature of one byte string."""
    series = entropy_series(data, cfg.segment_length)
    graph = entropy_graph(series, cfg.graph_shape)
    image = binary_to_image(data, cfg.image_width)
    return series, graph, image, encoder.encode(graph)


def features_from_programs(entries, cfg=None, encoder=None):
    """Build a FeatureSet straight from corpus entries (no disk round-trip)."""
    cfg = cfg or ExtractConfig()
    encoder = encoder or FrozenEncoder(cfg.encoder_dim, cfg.encoder_seed)
    images, feats = [], []
    for e in entries:
        _, _, img, tf = sample_features(e.program.serialize(), cfg, encoder)
        images.append(img)
        feats.append(tf)
    return FeatureSet([e.id for e in entries], [e.family for e in entries],
                      [e.provenance for e in entries], [e.origin for e in entries],
                      np.stack(images).astype(np.float32), np.stack(feats).astype(np.float32),
                      {"extract": cfg.to_dict(), "encoder": encoder.fingerprint()})


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def extract_corpus(manifest_path, out_dir, cfg=None, encoder=None):
    """Write one feature container per manifest entry plus ``features.json``."""
    cfg = cfg or ExtractConfig()
    encoder = encoder or FrozenEncoder(cfg.encoder_dim, cfg.encoder_seed)
    manifest, root = load_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for rec in manifest["entries"]:
        with open(os.path.join(root, rec["path"]), "rb") as fh:
            data = fh.read()
        series, graph, image, tf = sample_features(data, cfg, encoder)
        name = f"{rec['id']}.tsf"
        arrayio.save(os.path.join(out_dir, name), {
            "entropy_series": series.values,
            "entropy_graph": graph.matrix.astype(np.float32),
            "image": image.astype(np.float32),
            "task_feature": tf.astype(np.float32),
        }, meta={"id": rec["id"], "family": rec["family"], "source_length": graph.source_length})
        records.append({"id": rec["id"], "file": name, "family": rec["family"],
                        "provenance": rec["provenance"], "origin": rec["origin"]})
    corpus_manifest = os.path.join(root, "manifest.json")
    doc = {
        "kind": "features",
        "version": 1,
        "corpus_digest": _file_digest(corpus_manifest)[:16],
        "extract": cfg.to_dict(),
        "encoder": encoder.fingerprint()[:16],
        "entries": records,
    }
    arrayio.atomic_write_bytes(os.path.join(out_dir, "features.json"), dump_json(doc).encode())
    return load_features(out_dir)


def load_features(feature_dir):
    path = os.path.join(feature_dir, "features.json")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no features.json in {feature_dir}")
    with open(path) as fh:
        doc = json.load(fh)
    images, feats = [], []
    for rec in doc["entries"]:
        arrays, _ = arrayio.load(os.path.join(feature_dir, rec["file"]))
        images.append(arrays["image"])
        feats.append(arrays["task_feature"])
    entries = doc["entries"]
    meta = {k: v for k, v in doc.items() if k != "entries"}
    meta["features_digest"] = _file_digest(path)[:16]
    return FeatureSet([r["id"] for r in entries], [r["family"] for r in entries],
                      [r["provenance"] for r in entries], [r["origin"] for r in entries],
                      np.stack(images).astype(np.float32), np.stack(feats).astype(np.float32),
                      meta)


def split_by_origin(fs, eval_fraction=0.4, seed=0):
    """Per-family split that keeps each original with its obfuscated variants."""
    rng = np.random.default_rng([seed, 0x5B])
    train, test = [], []
    for fam in fs.class_names:
        idx = [i for i, f in enumerate(fs.families) if f == fam]
        origins = sorted({fs.origin[i] for i in idx})
        order = rng.permutation(len(origins))
        n_eval = max(1, int(round(eval_fraction * len(origins))))
        eval_origins = {origins[j] for j in order[:n_eval]}
        for i in idx:
            (test if fs.origin[i] in eval_origins else train).append(i)
    return fs.subset(sorted(train)), fs.subset(sorted(test))


def split_by_family(fs, eval_families):
    eval_families = set(eval_families)
    tr = [i for i, f in enumerate(fs.families) if f not in eval_families]
    te = [i for i, f in enumerate(fs.families) if f in eval_families]
    return fs.subset(tr), fs.subset(te)
