"""Pair sampling, the hybrid-loss training step, and checkpoints."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from tasnn import arrayio
from tasnn.features import AugmentationConfig, augment
from tasnn.losses import ClassCenters, bce_loss, center_loss, embedding_loss, hybrid_loss
from tasnn.model import ModelConfig, TaskAwareSNN

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tasnn-checkpoint/1"


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    steps_per_epoch: int = 25
    batch_size: int = 32
    lr_image: float = 1e-4
    lr_generator: float = 1e-3
    lr_task: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    augment: bool = True
    val_pairs: int = 128
    seed: int = 0

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if self.epochs < 0 or self.steps_per_epoch < 1 or self.batch_size < 2:
            raise ValueError("invalid training schedule")

    def to_dict(self):
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class PairBatch:
    x1: torch.Tensor
    x2: torch.Tensor
    y_d: torch.Tensor   # 1 for same-family pairs
    y1: torch.Tensor    # class labels of each side
    y2: torch.Tensor
    e1: torch.Tensor    # task features of each side
    e2: torch.Tensor

    def __post_init__(self):
        if not torch.equal(self.y_d.long(), (self.y1 == self.y2).long()):
            raise ValueError("pair labels disagree with class labels")


def sample_pair_indices(rng, labels, n_pairs):
    """Half same-class, half different-class index pairs."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    members = {c: np.flatnonzero(labels == c) for c in classes}
    multi = [c for c in classes if len(members[c]) >= 2]
    if not multi or len(classes) < 2:
        raise ValueError("need >= 2 classes and one class with >= 2 samples")
    n_pos = n_pairs // 2
    a, b = [], []
    for _ in range(n_pos):
        c = multi[rng.integers(len(multi))]
        i, j = rng.choice(members[c], size=2, replace=False)
        a.append(i)
        b.append(j)
    for _ in range(n_pairs - n_pos):
        c1, c2 = rng.choice(classes, size=2, replace=False)
        a.append(rng.choice(members[c1]))
        b.append(rng.choice(members[c2]))
    return np.array(a), np.array(b)


def make_batch(fs, labels, a, b, rng=None, aug_cfg=None, dtype=torch.float32):
    def images(idx):
        imgs = fs.images[idx].astype(np.float64)
        if aug_cfg is not None:
            seeds = rng.integers(1 << 31, size=len(idx))
            return np.stack([augment(im, aug_cfg, int(s)) for im, s in zip(imgs, seeds)])
        return imgs / 255.0

    y1 = torch.as_tensor(labels[a])
    y2 = torch.as_tensor(labels[b])
    return PairBatch(
        torch.as_tensor(images(a), dtype=dtype)[:, None],
        torch.as_tensor(images(b), dtype=dtype)[:, None],
        (y1 == y2).long(), y1, y2,
        torch.as_tensor(fs.task_features[a], dtype=dtype),
        torch.as_tensor(fs.task_features[b], dtype=dtype),
    )


def batch_losses(model, centers, batch):
    """All loss terms for one batch; returns (total, parts, distance features)."""
    cfg = model.cfg
    h1, h2, dfeat, dist, prob = model.pair_forward(batch.x1, batch.x2, batch.e1, batch.e2)
    l_b = bce_loss(prob, batch.y_d)
    l_c = center_loss(dfeat, batch.y_d, centers.centers)
    if cfg.beta > 0:
        logits = model.class_logits(torch.cat([h1, h2]))
        l_e = embedding_loss(logits, torch.cat([batch.y1, batch.y2]))
    else:
        l_e = torch.zeros((), dtype=l_b.dtype)
    total = hybrid_loss(l_e, l_b, l_c, cfg.beta, cfg.center_loss_weight)
    parts = {"loss": total, "embedding": l_e, "bce": l_b, "center": l_c}
    return total, parts, dfeat


class Trainer:
    """Owns the model, optimizer, centers and sampling RNG of one run."""

    def __init__(self, model, train_set, cfg=None, val_set=None, class_names=None):
        self.model = model
        self.cfg = cfg or TrainConfig()
        self.train_set = train_set
        self.class_names = list(class_names or train_set.class_names)
        self.labels = train_set.labels(self.class_names)
        self.val_set = val_set
        self.rng = np.random.default_rng([self.cfg.seed, 0x7EA])
        self.centers = ClassCenters(2, model.cfg.embedding_dim, model.cfg.center_update_rate,
                                    dtype=model.task_mean.dtype)
        betas = self.cfg.adam_betas
        self.optimizer = torch.optim.Adam([
            {"params": model.image_network_parameters(), "lr": self.cfg.lr_image},
            {"params": model.generator_parameters(), "lr": self.cfg.lr_generator},
            {"params": model.task_network_parameters(), "lr": self.cfg.lr_task},
        ], betas=betas, eps=self.cfg.adam_eps)
        self.aug_cfg = AugmentationConfig() if self.cfg.augment else None
        self.step = 0
        self.epoch = 0
        self.history = {"train": [], "val": []}
        self._val_batch = None

    def sample_batch(self):
        a, b = sample_pair_indices(self.rng, self.labels, self.cfg.batch_size)
        return make_batch(self.train_set, self.labels, a, b, self.rng, self.aug_cfg,
                          dtype=self.model.task_mean.dtype)

    def train_step(self, batch):
        """One Adam update on ``batch``; returns the loss terms as floats."""
        self.model.train()
        total, parts, dfeat = batch_losses(self.model, self.centers, batch)
        if not torch.isfinite(total):
            raise NumericalError(
                f"non-finite loss at step {self.step}: "
                + ", ".join(f"{k}={float(v.detach()):.4g}" for k, v in parts.items()))
        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self.optimizer.step()
        self.centers.update(dfeat, batch.y_d)
        self.step += 1
        return {k: float(v.detach()) for k, v in parts.items()}

    def validation_loss(self):
        if self.val_set is None or len(self.val_set) < 2:
            return None
        if self._val_batch is None:
            val_labels = self.val_set.labels(sorted(set(self.class_names) | set(self.val_set.families)))
            rng = np.random.default_rng([self.cfg.seed, 0x7A1])
            a, b = sample_pair_indices(rng, val_labels, self.cfg.val_pairs)
            known = {n: i for i, n in enumerate(self.class_names)}
            # embedding loss needs training-class indices; unseen families get -1 and are skipped
            lab = np.array([known.get(f, -1) for f in self.val_set.families])
            self._val_batch = (make_batch(self.val_set, val_labels, a, b,
                                          dtype=self.model.task_mean.dtype), lab[a], lab[b])
        batch, la, lb = self._val_batch
        self.model.eval()
        with torch.no_grad():
            h1, h2, dfeat, dist, prob = self.model.pair_forward(batch.x1, batch.x2, batch.e1, batch.e2)
            l_b = bce_loss(prob, batch.y_d)
            l_c = center_loss(dfeat, batch.y_d, self.centers.centers)
            lab = torch.as_tensor(np.concatenate([la, lb]))
            keep = lab >= 0
            if self.model.cfg.beta > 0 and keep.any():
                logits = self.model.class_logits(torch.cat([h1, h2]))[keep]
                l_e = embedding_loss(logits, lab[keep])
            else:
                l_e = torch.zeros((), dtype=l_b.dtype)
            total = hybrid_loss(l_e, l_b, l_c, self.model.cfg.beta, self.model.cfg.center_loss_weight)
        return float(total)

    def run_epoch(self):
        parts = [self.train_step(self.sample_batch()) for _ in range(self.cfg.steps_per_epoch)]
        rec = {k: float(np.mean([p[k] for p in parts])) for k in parts[0]}
        rec["epoch"] = self.epoch
        self.history["train"].append(rec)
        val = self.validation_loss()
        if val is not None:
            self.history["val"].append({"epoch": self.epoch, "loss": val})
        self.epoch += 1
        log.info("epoch %d loss %.4f val %s", rec["epoch"], rec["loss"], val)
        return rec

    def fit(self, epochs=None):
        target = self.cfg.epochs if epochs is None else epochs
        while self.epoch < target:
            self.run_epoch()
        self.model.eval()
        return self.history


def build_model(model_cfg, train_set):
    model = TaskAwareSNN(model_cfg)
    model.set_task_normalization(train_set.task_features)
    model.eval()
    return model


# -- checkpoints --------------------------------------------------------------

def _rng_state_json(rng):
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"],
            "state": {k: str(v) for k, v in st["state"].items()},
            "has_uint32": st["has_uint32"], "uinteger": st["uinteger"]}


def _rng_from_json(d):
    rng = np.random.default_rng()
    rng.bit_generator.state = {"bit_generator": d["bit_generator"],
                               "state": {k: int(v) for k, v in d["state"].items()},
                               "has_uint32": d["has_uint32"], "uinteger": d["uinteger"]}
    return rng


def checkpoint_payload(trainer, extra_meta=None):
    model = trainer.model
    arrays = {}
    for name, t in model.state_dict().items():
        arrays[f"model/{name}"] = t.detach().cpu().numpy()
    opt = trainer.optimizer.state_dict()
    for idx in sorted(opt["state"]):
        for key, val in sorted(opt["state"][idx].items()):
            arrays[f"optim/{idx}/{key}"] = torch.as_tensor(val).cpu().numpy()
    arrays["centers"] = trainer.centers.centers.cpu().numpy()
    meta = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model.cfg.to_dict(),
        "train_config": trainer.cfg.to_dict(),
        "class_names": trainer.class_names,
        "step": trainer.step,
        "epoch": trainer.epoch,
        "history": trainer.history,
        "rng": _rng_state_json(trainer.rng),
        "param_groups": [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()}
                         for g in opt["param_groups"]],
        "extra": extra_meta or {},
    }
    return arrays, meta


def save_checkpoint(path, trainer, extra_meta=None):
    arrays, meta = checkpoint_payload(trainer, extra_meta)
    arrayio.save(path, arrays, meta)


def load_checkpoint(path, train_set=None):
    """Rebuild a Trainer (model, optimizer, centers, RNG) from ``path``.

    ``train_set`` is needed only to continue training.
    """
    arrays, meta = arrayio.load(path)
    if not isinstance(meta, dict) or meta.get("format") != CHECKPOINT_FORMAT:
        raise arrayio.ContainerError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    mcfg = ModelConfig(**meta["model_config"])
    model = TaskAwareSNN(mcfg)
    state = {k[len("model/"):]: torch.from_numpy(v) for k, v in arrays.items()
             if k.startswith("model/")}
    model.load_state_dict(state)
    model.eval()
    tcfg = TrainConfig(**meta["train_config"])
    trainer = Trainer.__new__(Trainer)
    trainer.model = model
    trainer.cfg = tcfg
    trainer.train_set = train_set
    trainer.class_names = list(meta["class_names"])
    trainer.labels = train_set.labels(trainer.class_names) if train_set is not None else None
    trainer.val_set = None
    trainer._val_batch = None
    trainer.rng = _rng_from_json(meta["rng"])
    trainer.centers = ClassCenters(2, mcfg.embedding_dim, mcfg.center_update_rate,
                                   dtype=model.task_mean.dtype)
    trainer.centers.centers = torch.from_numpy(arrays["centers"]).clone()
    trainer.optimizer = torch.optim.Adam([
        {"params": model.image_network_parameters()},
        {"params": model.generator_parameters()},
        {"params": model.task_network_parameters()},
    ], lr=tcfg.lr_image)
    opt_state = {}
    for k, v in arrays.items():
        if k.startswith("optim/"):
            _, idx, key = k.split("/", 2)
            opt_state.setdefault(int(idx), {})[key] = torch.from_numpy(v).clone()
    groups = []
    for g in meta["param_groups"]:
        g = dict(g)
        if "betas" in g:
            g["betas"] = tuple(g["betas"])
        groups.append(g)
    trainer.optimizer.load_state_dict({"state": opt_state, "param_groups": groups})
    trainer.aug_cfg = AugmentationConfig() if tcfg.augment else None
    trainer.step = meta["step"]
    trainer.epoch = meta["epoch"]
    trainer.history = meta["history"]
    trainer.extra_meta = meta.get("extra", {})
    return trainer
