"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` module is unavailable, and as the
reference the compiled path is checked against.
"""
import numpy as np


def segment_entropy(data, segment_length):
    data = np.asarray(data, dtype=np.uint8)
    n = data.shape[0]
    n_seg = -(-n // segment_length)
    seg_id = np.arange(n) // segment_length
    counts = np.zeros((n_seg, 256), dtype=np.int64)
    np.add.at(counts, (seg_id, data), 1)
    lengths = counts.sum(axis=1, keepdims=True).astype(np.float64)
    p = counts / lengths
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1) + 0.0


def byte_histogram(data):
    return np.bincount(np.asarray(data, dtype=np.uint8), minlength=256).astype(np.int64)


def _axis_coords(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear_resize(img, out_h, out_w):
    img = np.ascontiguousarray(img, dtype=np.float64)
    ylo, yhi, yf = _axis_coords(img.shape[0], out_h)
    xlo, xhi, xf = _axis_coords(img.shape[1], out_w)
    a = img[ylo][:, xlo]
    b = img[ylo][:, xhi]
    top = a + xf * (b - a)
    a = img[yhi][:, xlo]
    b = img[yhi][:, xhi]
    bottom = a + xf * (b - a)
    return top + yf[:, None] * (bottom - top)
