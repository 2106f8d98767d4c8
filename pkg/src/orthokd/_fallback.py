"""Pure-numpy versions of the compiled kernels.

Same accumulation order as ``_kernels.pyx``: the reduction index is the
outer Python loop, so every output element sees its terms in ascending
order and the results match the compiled path bit for bit.
"""
import numpy as np


def gemm(a, b):
    m, kk = a.shape
    if b.shape[0] != kk:
        raise ValueError("inner dimensions differ")
    out = np.zeros((m, b.shape[1]), dtype=np.float64)
    # overflow propagates as inf/nan exactly like the C loop, without warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(kk):
            out += a[:, k, None] * b[None, k, :]
    return out


def col_dist(zs, zt):
    if zs.shape != zt.shape:
        raise ValueError("shape mismatch")
    d = zs.shape[1]
    acc = np.zeros((d, d), dtype=np.float64)
    for r in range(zs.shape[0]):
        diff = zs[r, None, :] - zt[r, :, None]
        acc += diff * diff
    return np.sqrt(acc)
