import numpy as np
import pytest

from tasnn import _pykernels, kernels
from oracles import brute_bilinear, brute_entropy_series

try:
    from tasnn import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.split(".")[-1])
@pytest.mark.parametrize("seg", [1, 7, 256, 1000])
def test_segment_entropy_matches_bruteforce(impl, seg):
    rng = np.random.default_rng(seg)
    data = rng.integers(0, rng.integers(2, 257), size=int(rng.integers(1, 3000)), dtype=np.uint8)
    got = impl.segment_entropy(data, seg)
    want = brute_entropy_series(data.tobytes(), seg)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_backends_agree():
    rng = np.random.default_rng(3)
    data = rng.integers(0, 256, size=50_001, dtype=np.uint8)
    np.testing.assert_allclose(_ckernels.segment_entropy(data, 256),
                               _pykernels.segment_entropy(data, 256), rtol=0, atol=1e-12)
    assert np.array_equal(_ckernels.byte_histogram(data), _pykernels.byte_histogram(data))
    img = rng.uniform(0, 255, size=(37, 256))
    np.testing.assert_allclose(_ckernels.bilinear_resize(img, 105, 105),
                               _pykernels.bilinear_resize(img, 105, 105), rtol=0, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.split(".")[-1])
def test_bilinear_matches_textbook(impl):
    rng = np.random.default_rng(11)
    grid = rng.uniform(0, 255, size=(9, 13))
    got = impl.bilinear_resize(grid, 21, 6)
    np.testing.assert_allclose(got, brute_bilinear(grid.tolist(), 21, 6), atol=1e-9)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_histogram_counts():
    data = bytes([0, 0, 255, 3])
    h = kernels.byte_histogram(data)
    assert h.sum() == 4 and h[0] == 2 and h[255] == 1 and h[3] == 1
