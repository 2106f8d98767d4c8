import importlib

import numpy as np
import pytest

from orthokd import _backend, _fallback
from orthokd.linalg import matmul

try:
    _kernels = importlib.import_module("orthokd._kernels")
except ImportError:  # pragma: no cover
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


def naive_gemm(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for r in range(k):
                s += a[i, r] * b[r, j]
            out[i, j] = s
    return out


SHAPES = [(1, 1, 1), (3, 5, 2), (7, 130, 9), (5, 64, 4), (0, 3, 2), (4, 0, 3)]


@pytest.mark.parametrize("m,k,n", SHAPES)
def test_fallback_gemm_matches_naive_exactly(m, k, n):
    rng = np.random.default_rng(m * 100 + k + n)
    a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
    np.testing.assert_array_equal(_fallback.gemm(a, b), naive_gemm(a, b))


@needs_ext
@pytest.mark.parametrize("m,k,n", SHAPES + [(33, 200, 17)])
def test_compiled_gemm_bit_identical_to_fallback(m, k, n):
    rng = np.random.default_rng(k)
    a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
    assert _kernels.gemm(a, b).tobytes() == _fallback.gemm(a, b).tobytes()


def test_matmul_accepts_strided_views(rng):
    a = rng.standard_normal((20, 12))
    b = rng.standard_normal((9, 12))
    np.testing.assert_array_equal(matmul(a[::2], b.T), naive_gemm(a[::2], b.T))


@needs_ext
def test_col_dist_bit_identical(rng):
    zs, zt = rng.standard_normal((37, 6)), rng.standard_normal((37, 6))
    got = _kernels.col_dist(zs, zt)
    assert got.tobytes() == _fallback.col_dist(zs, zt).tobytes()
    ref = np.sqrt(((zs[:, None, :] - zt[:, :, None]) ** 2).sum(axis=0))
    np.testing.assert_allclose(got, ref, rtol=1e-14)


def test_backend_name():
    assert _backend.NAME in ("cython", "python")
