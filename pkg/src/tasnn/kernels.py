"""Backend selection for the numeric kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used. Set ``TASNN_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from tasnn import _pykernels

if os.environ.get("TASNN_PURE_PYTHON", "") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from tasnn import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"


def segment_entropy(data, segment_length):
    """Shannon entropy in bits of each ``segment_length`` chunk of ``data``."""
    buf = np.ascontiguousarray(np.frombuffer(bytes(data), dtype=np.uint8)
                               if isinstance(data, (bytes, bytearray, memoryview))
                               else np.asarray(data, dtype=np.uint8))
    return _impl.segment_entropy(buf, int(segment_length))


def byte_histogram(data):
    buf = np.ascontiguousarray(np.frombuffer(bytes(data), dtype=np.uint8)
                               if isinstance(data, (bytes, bytearray, memoryview))
                               else np.asarray(data, dtype=np.uint8))
    return _impl.byte_histogram(buf)


def bilinear_resize(img, out_h, out_w):
    """Half-pixel-centred bilinear resize with edge clamping."""
    return _impl.bilinear_resize(np.ascontiguousarray(img, dtype=np.float64),
                                 int(out_h), int(out_w))
