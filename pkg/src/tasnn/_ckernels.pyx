# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for per-segment byte entropy and bilinear resizing.

Signatures and results match :mod:`tasnn._pykernels` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, floor

cnp.import_array()


def segment_entropy(const unsigned char[::1] data, Py_ssize_t segment_length):
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t n_seg = (n + segment_length - 1) // segment_length
    cdef Py_ssize_t s, i, start, stop, length
    cdef long counts[256]
    cdef double h, p
    out = np.empty(n_seg, dtype=np.float64)
    cdef double[::1] res = out
    for s in range(n_seg):
        for i in range(256):
            counts[i] = 0
        start = s * segment_length
        stop = start + segment_length
        if stop > n:
            stop = n
        length = stop - start
        for i in range(start, stop):
            counts[data[i]] += 1
        h = 0.0
        for i in range(256):
            if counts[i] > 0:
                p = <double>counts[i] / <double>length
                h -= p * log2(p)
        # -0.0 for single-valued segments
        res[s] = h + 0.0
    return out


def byte_histogram(const unsigned char[::1] data):
    out = np.zeros(256, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = out
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        counts[data[i]] += 1
    return out


cdef void _axis_coords(Py_ssize_t n_in, Py_ssize_t n_out,
                       Py_ssize_t[::1] lo, Py_ssize_t[::1] hi, double[::1] frac):
    cdef double scale = <double>n_in / <double>n_out
    cdef double src
    cdef Py_ssize_t j, i0
    for j in range(n_out):
        src = (j + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > n_in - 1:
            src = <double>(n_in - 1)
        i0 = <Py_ssize_t>floor(src)
        lo[j] = i0
        hi[j] = i0 + 1 if i0 + 1 < n_in else n_in - 1
        frac[j] = src - i0


def bilinear_resize(const double[:, ::1] img, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t in_h = img.shape[0], in_w = img.shape[1]
    cdef Py_ssize_t r, c
    cdef double a, b, top, bottom
    ylo_a = np.empty(out_h, dtype=np.intp)
    yhi_a = np.empty(out_h, dtype=np.intp)
    yf_a = np.empty(out_h, dtype=np.float64)
    xlo_a = np.empty(out_w, dtype=np.intp)
    xhi_a = np.empty(out_w, dtype=np.intp)
    xf_a = np.empty(out_w, dtype=np.float64)
    cdef Py_ssize_t[::1] ylo = ylo_a, yhi = yhi_a, xlo = xlo_a, xhi = xhi_a
    cdef double[::1] yf = yf_a, xf = xf_a
    _axis_coords(in_h, out_h, ylo, yhi, yf)
    _axis_coords(in_w, out_w, xlo, xhi, xf)
    out = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] res = out
    for r in range(out_h):
        for c in range(out_w):
            a = img[ylo[r], xlo[c]]
            b = img[ylo[r], xhi[c]]
            top = a + xf[c] * (b - a)
            a = img[yhi[r], xlo[c]]
            b = img[yhi[r], xhi[c]]
            bottom = a + xf[c] * (b - a)
            res[r, c] = top + yf[r] * (bottom - top)
    return out
