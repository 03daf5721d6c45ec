"""Byte-level feature extraction: entropy series/graphs and grayscale images.

Two model inputs come out of a program's bytes:

* an entropy graph: per-segment Shannon entropies laid out row-major on a
  fixed grid, then encoded by a frozen convolutional encoder into the task
  feature vector;
* a grayscale image: bytes as rows of a fixed width, bilinearly resized.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from scipy import ndimage

from tasnn import kernels

DEFAULT_SEGMENT_LENGTH = 256
DEFAULT_GRAPH_SHAPE = (254, 254)
DEFAULT_IMAGE_WIDTH = 256
IMAGE_SIZE = 105
MAX_ENTROPY = 8.0


def _as_u8(data):
    if isinstance(data, (bytes, bytearray, memoryview)):
        return np.frombuffer(bytes(data), dtype=np.uint8)
    return np.asarray(data, dtype=np.uint8)


@dataclass
class EntropySeries:
    values: np.ndarray
    segment_length: int

    def __len__(self):
        return len(self.values)


@dataclass
class EntropyGraph:
    matrix: np.ndarray
    source_length: int

    @property
    def shape(self):
        return self.matrix.shape


def entropy_series(data, segment_length=DEFAULT_SEGMENT_LENGTH):
    """Shannon entropy (bits/byte) of each consecutive segment.

    The trailing partial segment is measured over its actual length.
    """
    buf = _as_u8(data)
    if buf.size == 0:
        raise ValueError("entropy_series needs a non-empty byte sequence")
    if segment_length < 1:
        raise ValueError("segment_length must be >= 1")
    return EntropySeries(kernels.segment_entropy(buf, segment_length), int(segment_length))


def entropy_graph(series, shape=DEFAULT_GRAPH_SHAPE):
    """Row-major layout of ``series`` on an ``shape`` grid; zero-pad or truncate."""
    values = np.asarray(series.values if isinstance(series, EntropySeries) else series,
                        dtype=np.float64)
    if values.size == 0:
        raise ValueError("entropy_graph needs a non-empty series")
    h, w = shape
    flat = np.zeros(h * w, dtype=np.float64)
    n = min(values.size, h * w)
    flat[:n] = values[:n]
    return EntropyGraph(flat.reshape(h, w), int(values.size))


def full_entropy(data):
    """Entropy of the whole-file byte histogram."""
    counts = kernels.byte_histogram(_as_u8(data))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


def binary_to_image(data, width=DEFAULT_IMAGE_WIDTH, size=IMAGE_SIZE):
    """Bytes as a ``width``-wide grayscale grid, bilinearly resized to ``size``x``size``."""
    buf = _as_u8(data)
    if buf.size == 0:
        raise ValueError("binary_to_image needs a non-empty byte sequence")
    if width < 1:
        raise ValueError("width must be >= 1")
    rows = -(-buf.size // width)
    grid = np.zeros(rows * width, dtype=np.float64)
    grid[:buf.size] = buf
    img = kernels.bilinear_resize(grid.reshape(rows, width), size, size)
    return np.clip(img, 0.0, 255.0)


# -- augmentation ------------------------------------------------------------

@dataclass
class AugmentationConfig:
    rescale: float = 1.0 / 255.0
    zca_epsilon: float = 1e-6
    zca_whitening: bool = False
    fill_mode: str = "wrap"
    rotation_range: float = 0.1
    height_shift_range: float = 0.5
    horizontal_flip: bool = True

    def __post_init__(self):
        if self.fill_mode != "wrap":
            raise ValueError("only fill_mode='wrap' is supported")
        if self.rotation_range < 0 or self.height_shift_range < 0:
            raise ValueError("augmentation ranges must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AugmentationDraw:
    angle: float
    shift: int
    flip: bool


def draw_augmentation(cfg, seed, height=IMAGE_SIZE):
    """The random parameters ``augment`` would use for ``seed``."""
    rng = np.random.default_rng([seed, 0xA6])
    angle = rng.uniform(-cfg.rotation_range, cfg.rotation_range)
    frac = rng.uniform(-cfg.height_shift_range, cfg.height_shift_range)
    flip = bool(rng.random() < 0.5) and cfg.horizontal_flip
    return AugmentationDraw(float(angle), int(round(frac * height)), flip)


def apply_augmentation(img, draw, cfg):
    out = np.asarray(img, dtype=np.float64)
    if draw.angle != 0.0:
        out = ndimage.rotate(out, draw.angle, reshape=False, order=1, mode="grid-wrap")
    if draw.shift:
        out = np.roll(out, draw.shift, axis=0)
    if draw.flip:
        out = out[:, ::-1]
    out = np.clip(out, 0.0, 255.0)
    return np.ascontiguousarray(out * cfg.rescale)


def augment(img, cfg, seed):
    """Random rotation, wrapped vertical shift, optional flip, then rescale."""
    return apply_augmentation(img, draw_augmentation(cfg, seed, np.shape(img)[0]), cfg)


def zca_whiten(images, epsilon=1e-6):
    """ZCA-whiten a stack of images (N, H, W); returns the whitened stack."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    x = x - x.mean(axis=0)
    cov = x.T @ x / x.shape[0]
    u, s, _ = np.linalg.svd(cov)
    w = (u * (1.0 / np.sqrt(s + epsilon))) @ u.T
    return (x @ w).reshape(np.shape(images))


# -- frozen task-feature encoder ---------------------------------------------

class FrozenEncoder(torch.nn.Module):
    """Seeded, never-trained convolutional encoder for entropy graphs.

    Stands in for an ImageNet backbone; anything exposing ``dim`` and
    ``encode(matrix) -> np.ndarray`` can replace it.
    """

    def __init__(self, dim=256, seed=0):
        super().__init__()
        self.dim = int(dim)
        self.seed = int(seed)
        rng = np.random.default_rng([seed, 0xE4C])

        def conv(cin, cout, k):
            std = math.sqrt(2.0 / (cin * k * k))
            w = rng.normal(0.0, std, size=(cout, cin, k, k))
            b = rng.uniform(-0.1, 0.1, size=cout)
            return (torch.nn.Parameter(torch.tensor(w), requires_grad=False),
                    torch.nn.Parameter(torch.tensor(b), requires_grad=False))

        self.w1, self.b1 = conv(1, 8, 5)
        self.w2, self.b2 = conv(8, 16, 3)
        self.w3, self.b3 = conv(16, 32, 3)
        proj = rng.normal(0.0, 1.0 / math.sqrt(64), size=(64, self.dim))
        self.proj = torch.nn.Parameter(torch.tensor(proj), requires_grad=False)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        f = torch.nn.functional
        h = f.max_pool2d(f.relu(f.conv2d(x, self.w1, self.b1, stride=2)), 2)
        h = f.max_pool2d(f.relu(f.conv2d(h, self.w2, self.b2)), 2)
        h = f.relu(f.conv2d(h, self.w3, self.b3))
        pooled = torch.cat([h.amax(dim=(2, 3)), h.mean(dim=(2, 3))], dim=1)
        return pooled @ self.proj

    @torch.no_grad()
    def encode(self, matrix):
        m = np.asarray(matrix.matrix if isinstance(matrix, EntropyGraph) else matrix,
                       dtype=np.float64)
        squeeze = m.ndim == 2
        x = torch.from_numpy(np.ascontiguousarray(m.reshape(-1, 1, *m.shape[-2:]) / MAX_ENTROPY))
        out = self.forward(x).numpy()
        return out[0] if squeeze else out

    def fingerprint(self):
        """Stable digest of the encoder parameters."""
        import hashlib
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()


def entropy_encode(graph, encoder, dim=None):
    """Task feature vector of one entropy graph."""
    if dim is not None and dim != encoder.dim:
        raise ValueError(f"encoder dimension {encoder.dim} != configured {dim}")
    return encoder.encode(graph)
