"""Task-aware Siamese network.

Each branch is an image CNN whose last fully connected layers use factorized
weights ``W = W_shared * w_task`` (column-wise). The task vector ``w_task``
for a layer comes from a weight generator applied to the output of the task
network, which in turn reads the entropy feature of the input's family.
With conditioning disabled every ``w_task`` is all-ones and the network is a
plain Siamese CNN.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from tasnn.losses import pair_probability


@dataclass
class ModelConfig:
    image_size: int = 105
    conv_channels: tuple = (16, 32, 32, 64)
    fc_hidden: int = 512
    embedding_dim: int = 64
    task_input_dim: int = 256
    task_hidden: int = 512
    conditioned_layers: int = 2
    task_conditioning: bool = True
    n_classes: int = 13
    beta: float = 0.8
    center_loss_weight: float = 0.5
    center_update_rate: float = 0.5
    init_shift: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if len(self.conv_channels) != 4:
            raise ValueError("conv_channels must list 4 layers")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        for name in ("fc_hidden", "embedding_dim", "task_input_dim", "task_hidden",
                     "n_classes", "image_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.conditioned_layers not in (1, 2):
            raise ValueError("conditioned_layers must be 1 or 2")
        if self.center_loss_weight < 0:
            raise ValueError("center_loss_weight must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @property
    def flat_dim(self):
        s = (self.image_size + 2 * 2 - 5) // 2 + 1  # conv1, stride 2
        for _ in range(3):
            s //= 2
        return self.conv_channels[3] * s * s


def compose_weights(shared, task):
    """Column-wise product ``W[r, c] = shared[r, c] * task[c]``.

    ``task`` may carry leading batch dimensions, giving one composed matrix
    per task vector.
    """
    shared = torch.as_tensor(shared)
    task = torch.as_tensor(task, dtype=shared.dtype)
    if shared.ndim != 2 or task.shape[-1] != shared.shape[1]:
        raise ValueError(f"cannot compose {tuple(shared.shape)} with {tuple(task.shape)}")
    return shared * task[..., None, :]


def safe_norm(x):
    """Row-wise Euclidean norm whose gradient is 0 (not NaN) at the origin."""
    s = (x ** 2).sum(dim=-1)
    pos = s > 0
    return torch.where(pos, torch.sqrt(torch.where(pos, s, torch.ones_like(s))),
                       torch.zeros_like(s))


class _Init:
    """Seeded fan-in uniform initialisation drawn from numpy."""

    def __init__(self, seed):
        self.rng = np.random.default_rng([seed, 0x1417])

    def uniform(self, shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return torch.nn.Parameter(torch.tensor(self.rng.uniform(-bound, bound, size=shape),
                                               dtype=torch.float32))

    def const(self, shape, value):
        return torch.nn.Parameter(torch.full(shape, float(value), dtype=torch.float32))


class TaskAwareSNN(torch.nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        init = _Init(cfg.seed)
        c = (1,) + cfg.conv_channels
        ks = (5, 3, 3, 3)
        self.conv_w = torch.nn.ParameterList(
            [init.uniform((c[i + 1], c[i], ks[i], ks[i]), c[i] * ks[i] * ks[i]) for i in range(4)])
        self.conv_b = torch.nn.ParameterList(
            [init.uniform((c[i + 1],), c[i] * ks[i] * ks[i]) for i in range(4)])
        self.bn = torch.nn.ModuleList([torch.nn.BatchNorm2d(c[i + 1]) for i in range(4)])

        # factorized FC layers: shared matrices W_sr plus biases
        dims = [(cfg.flat_dim, cfg.fc_hidden), (cfg.fc_hidden, cfg.embedding_dim)]
        self.shared = torch.nn.ParameterList([init.uniform(d, d[0]) for d in dims])
        self.fc_b = torch.nn.ParameterList([init.uniform((d[1],), d[0]) for d in dims])

        # task network (two FC layers) and one weight generator per conditioned layer
        self.task_w1 = init.uniform((cfg.task_input_dim, cfg.task_hidden), cfg.task_input_dim)
        self.task_b1 = init.uniform((cfg.task_hidden,), cfg.task_input_dim)
        self.task_w2 = init.uniform((cfg.task_hidden, cfg.task_hidden), cfg.task_hidden)
        self.task_b2 = init.uniform((cfg.task_hidden,), cfg.task_hidden)
        cond = dims[-cfg.conditioned_layers:]
        # small weights and unit bias: generated vectors start near all-ones
        self.gen_w = torch.nn.ParameterList(
            [init.uniform((cfg.task_hidden, d[1]), cfg.task_hidden * 100) for d in cond])
        self.gen_b = torch.nn.ParameterList([init.const((d[1],), 1.0) for d in cond])

        self.head_w = init.uniform((cfg.embedding_dim, cfg.n_classes), cfg.embedding_dim)
        self.head_b = init.uniform((cfg.n_classes,), cfg.embedding_dim)
        self.shift = torch.nn.Parameter(torch.tensor(float(cfg.init_shift)))

        self.register_buffer("task_mean", torch.zeros(cfg.task_input_dim))
        self.register_buffer("task_scale", torch.ones(cfg.task_input_dim))

    # -- parameter groups ---------------------------------------------------
    def task_network_parameters(self):
        return [self.task_w1, self.task_b1, self.task_w2, self.task_b2]

    def generator_parameters(self):
        return list(self.gen_w) + list(self.gen_b)

    def image_network_parameters(self):
        skip = {id(p) for p in self.task_network_parameters() + self.generator_parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def set_task_normalization(self, feats):
        """Fix the standardisation of raw task features from a training set."""
        feats = torch.as_tensor(np.asarray(feats), dtype=self.task_mean.dtype)
        self.task_mean.copy_(feats.mean(dim=0))
        self.task_scale.copy_(feats.std(dim=0, unbiased=False).clamp_min(1e-6))

    # -- forward pieces -----------------------------------------------------
    def image_features(self, x):
        """Convolutional trunk: (B, 1, H, W) in [0, 1] -> (B, flat_dim)."""
        h = x
        for i in range(4):
            stride, pad = (2, 2) if i == 0 else (1, 1)
            h = F.conv2d(h, self.conv_w[i], self.conv_b[i], stride=stride, padding=pad)
            h = F.relu(self.bn[i](h))
            if i < 3:
                h = F.max_pool2d(h, 2)
        return h.flatten(1)

    def task_embedding(self, e_t):
        z = (torch.as_tensor(e_t, dtype=self.task_mean.dtype) - self.task_mean) / self.task_scale
        z = F.relu(z @ self.task_w1 + self.task_b1)
        return F.relu(z @ self.task_w2 + self.task_b2)

    def generate_task_weights(self, e_t):
        """One non-negative vector per conditioned layer, shaped (B, n_i)."""
        e_t = torch.as_tensor(e_t, dtype=self.task_mean.dtype)
        if e_t.shape[-1] != self.cfg.task_input_dim:
            raise ValueError(f"task feature has dim {e_t.shape[-1]}, "
                             f"expected {self.cfg.task_input_dim}")
        squeeze = e_t.ndim == 1
        if squeeze:
            e_t = e_t[None]
        t = self.task_embedding(e_t)
        out = [F.relu(t @ w + b) for w, b in zip(self.gen_w, self.gen_b)]
        return [o[0] for o in out] if squeeze else out

    def layer_task_weights(self, e_t, batch):
        """Task vectors for every factorized layer; all-ones where unconditioned."""
        dims = [self.cfg.fc_hidden, self.cfg.embedding_dim]
        ones = [torch.ones(batch, d, dtype=self.task_mean.dtype) for d in dims]
        if not self.cfg.task_conditioning or e_t is None:
            return ones
        gen = self.generate_task_weights(e_t)
        return ones[:len(dims) - len(gen)] + gen

    def embed(self, x, e_t=None):
        """Task-aware embedding of images ``x`` (B, 1, H, W) given task features (B, D).

        Uses ``(h @ W_sr) * w_ts``, which equals ``h @ compose_weights(W_sr, w_ts)``.
        """
        x = torch.as_tensor(x, dtype=self.task_mean.dtype)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.shape[-1] != self.cfg.image_size or x.shape[-2] != self.cfg.image_size:
            raise ValueError(f"expected {self.cfg.image_size}x{self.cfg.image_size} images")
        return self.embed_from_trunk(self.image_features(x), e_t)

    def embed_from_trunk(self, h, e_t=None):
        """Factorized FC layers applied to precomputed trunk features ``h``."""
        if e_t is not None:
            e_t = torch.as_tensor(e_t, dtype=self.task_mean.dtype)
            if e_t.ndim == 1:
                e_t = e_t[None].expand(h.shape[0], -1)
        w_ts = self.layer_task_weights(e_t, h.shape[0])
        h = F.relu((h @ self.shared[0]) * w_ts[0] + self.fc_b[0])
        return (h @ self.shared[1]) * w_ts[1] + self.fc_b[1]

    def class_logits(self, emb):
        return emb @ self.head_w + self.head_b

    def pair_forward(self, x1, x2, e1=None, e2=None):
        """Embeddings, distance features |h1 - h2|, distances and pair probabilities."""
        n = torch.as_tensor(x1).shape[0]
        x = torch.cat([torch.as_tensor(x1), torch.as_tensor(x2)])
        e = None
        if e1 is not None:
            e2 = e1 if e2 is None else e2
            e = torch.cat([torch.as_tensor(e1), torch.as_tensor(e2)])
        emb = self.embed(x, e)
        h1, h2 = emb[:n], emb[n:]
        dfeat = (h1 - h2).abs()
        dist = safe_norm(dfeat)
        return h1, h2, dfeat, dist, pair_probability(dist, self.shift)

    def pair_distance(self, x1, x2, e1=None, e2=None):
        """Euclidean distance between the two branch embeddings."""
        x1 = torch.as_tensor(x1, dtype=self.task_mean.dtype)
        x2 = torch.as_tensor(x2, dtype=self.task_mean.dtype)
        if x1.ndim == 2:
            x1, x2 = x1[None], x2[None]
        h1 = self.embed(x1, e1)
        h2 = self.embed(x2, e1 if e2 is None else e2)
        return torch.linalg.vector_norm(h1 - h2, dim=-1)

    def n_parameters(self):
        return sum(p.numel() for p in self.parameters())
