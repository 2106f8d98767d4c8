"""Dense real-64 matrix kernels.

Every product goes through :func:`matmul`, which uses a fixed accumulation
order (see ``_kernels.pyx``) so results are bit-reproducible.  LU solves
and the symmetric eigensolver are delegated to LAPACK through scipy/numpy.

A "matrix" throughout the package is a 2-D C-contiguous ``float64``
ndarray; :func:`as_matrix` normalises inputs to that form.
"""
from __future__ import annotations

import contextlib
import math
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import _backend
from .errors import NumericError, ShapeError

__all__ = [
    "SymEig",
    "as_matrix",
    "matmul",
    "solve",
    "onenorm",
    "expm",
    "expm_frechet",
    "expm_frechet_block",
    "sym_eig",
    "inv_sqrt_psd",
    "flop_count",
    "count_flops",
]

_flops = 0


def flop_count() -> int:
    """Floating-point operations issued by the dense kernels so far."""
    return _flops


class _FlopWindow:
    total = 0


@contextlib.contextmanager
def count_flops():
    """Count flops issued inside the ``with`` block.

    >>> with count_flops() as fc:
    ...     _ = matmul(np.eye(2), np.eye(2))
    >>> fc.total
    16
    """
    window = _FlopWindow()
    start = _flops
    try:
        yield window
    finally:
        window.total = _flops - start


def _add_flops(n):
    global _flops
    _flops += int(n)


def as_matrix(x, name: str = "matrix", check_finite: bool = False) -> np.ndarray:
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if check_finite and not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


def _require_square(m, name):
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")


def matmul(a, b) -> np.ndarray:
    """Matrix product with a deterministic, fixed-order reduction."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    _add_flops(2 * a.shape[0] * a.shape[1] * b.shape[1])
    return _backend.gemm(a, b)


def solve(a, b) -> np.ndarray:
    """Solve ``a x = b`` by LU with partial pivoting."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _require_square(a, "a")
    if b.shape[0] != a.shape[0]:
        raise ShapeError(f"cannot solve {a.shape} system with rhs {b.shape}")
    lu = _lu_factor(a)
    return _lu_solve(lu, b)


def _lu_factor(a):
    n = a.shape[0]
    _add_flops(2 * n**3 // 3)
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0.0):
        raise NumericError("singular matrix in LU factorisation")
    return lu, piv


def _lu_solve(lu_piv, b):
    n = lu_piv[0].shape[0]
    _add_flops(2 * n * n * b.shape[1])
    return np.ascontiguousarray(scipy.linalg.lu_solve(lu_piv, b, check_finite=False))


def onenorm(a) -> float:
    """Maximum absolute column sum."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=0).max())


# ---------------------------------------------------------------------------
# matrix exponential

# Diagonal Padé coefficients b_0..b_m.
_PADE_COEFFS = {
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
        16380.0, 182.0, 1.0,
    ),
}

# Largest 1-norm for which the order-m approximant meets unit roundoff in
# double precision.  Orders below 7 are deliberately not used.
EXPM_THETA = {7: 0.9504178996162932, 9: 2.097847961257068, 13: 5.371920351148152}

# Same role for the combined exponential / Fréchet-derivative evaluation.
FRECHET_ELL = {7: 0.783, 9: 1.78, 13: 4.74}


def _pade(a, m, e=None):
    """Numerator/denominator pieces U, V of the order-m approximant at ``a``.

    With a direction ``e`` also returns their Fréchet derivatives Lu, Lv.
    """
    b = _PADE_COEFFS[m]
    n = a.shape[0]
    ident = np.eye(n)
    a2 = matmul(a, a)
    a4 = matmul(a2, a2)
    a6 = matmul(a2, a4)
    if e is not None:
        m2 = matmul(a, e) + matmul(e, a)
        m4 = matmul(a2, m2) + matmul(m2, a2)
        m6 = matmul(a4, m2) + matmul(m4, a2)
    if m == 13:
        w1 = b[13] * a6 + b[11] * a4 + b[9] * a2
        w2 = b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident
        z1 = b[12] * a6 + b[10] * a4 + b[8] * a2
        z2 = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
        w = matmul(a6, w1) + w2
        u = matmul(a, w)
        v = matmul(a6, z1) + z2
        if e is None:
            return u, v, None, None
        lw1 = b[13] * m6 + b[11] * m4 + b[9] * m2
        lw2 = b[7] * m6 + b[5] * m4 + b[3] * m2
        lz1 = b[12] * m6 + b[10] * m4 + b[8] * m2
        lz2 = b[6] * m6 + b[4] * m4 + b[2] * m2
        lw = matmul(a6, lw1) + matmul(m6, w1) + lw2
        lu = matmul(a, lw) + matmul(e, w)
        lv = matmul(a6, lz1) + matmul(m6, z1) + lz2
        return u, v, lu, lv

    w = b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident
    v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    if e is not None:
        lw = b[7] * m6 + b[5] * m4 + b[3] * m2
        lv = b[6] * m6 + b[4] * m4 + b[2] * m2
    if m == 9:
        a8 = matmul(a4, a4)
        w = w + b[9] * a8
        v = v + b[8] * a8
        if e is not None:
            m8 = matmul(a4, m4) + matmul(m4, a4)
            lw = lw + b[9] * m8
            lv = lv + b[8] * m8
    u = matmul(a, w)
    if e is None:
        return u, v, None, None
    lu = matmul(a, lw) + matmul(e, w)
    return u, v, lu, lv


def _choose_order(norm, table):
    for m in (7, 9):
        if norm <= table[m]:
            return m, 0
    s = max(0, int(math.ceil(math.log2(norm / table[13])))) if norm > 0 else 0
    return 13, s


def expm(w) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Padé approximant.

    The order is 7, 9 or 13, picked from the 1-norm of ``w`` using
    :data:`EXPM_THETA`; above the order-13 threshold the argument is scaled
    by ``2**-s`` and the result squared ``s`` times.

    Parameters
    ----------
    w : (n, n) array_like

    Returns
    -------
    (n, n) ndarray
    """
    w = as_matrix(w, "w")
    _require_square(w, "w")
    n = w.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    m, s = _choose_order(onenorm(w), EXPM_THETA)
    a = w * 2.0**-s if s else w
    u, v, _, _ = _pade(a, m)
    r = _lu_solve(_lu_factor(v - u), u + v)
    for _ in range(s):
        r = matmul(r, r)
    if not np.all(np.isfinite(r)):
        raise NumericError("expm overflowed")
    return r


def expm_frechet(w, e) -> tuple[np.ndarray, np.ndarray]:
    """Exponential of ``w`` and its Fréchet derivative in direction ``e``.

    Evaluates the Padé approximant and its derivative together
    (Al-Mohy and Higham's scaling-squaring recurrence), which costs about
    three times an exponential instead of the eight of the 2n-by-2n block
    formulation in :func:`expm_frechet_block`.  Both agree to roundoff.
    """
    w = as_matrix(w, "w")
    e = as_matrix(e, "e")
    _require_square(w, "w")
    if e.shape != w.shape:
        raise ShapeError(f"direction shape {e.shape} differs from {w.shape}")
    n = w.shape[0]
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    m, s = _choose_order(onenorm(w), FRECHET_ELL)
    if s:
        scale = 2.0**-s
        w = w * scale
        e = e * scale
    u, v, lu, lv = _pade(w, m, e)
    lu_piv = _lu_factor(v - u)
    r = _lu_solve(lu_piv, u + v)
    ell = _lu_solve(lu_piv, lu + lv + matmul(lu - lv, r))
    for _ in range(s):
        ell = matmul(r, ell) + matmul(ell, r)
        r = matmul(r, r)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(ell))):
        raise NumericError("expm_frechet overflowed")
    return r, ell


def expm_frechet_block(w, e) -> np.ndarray:
    """Fréchet derivative read off the block exponential.

    ``expm([[w, e], [0, w]])`` has the derivative in its upper-right block.
    Slower than :func:`expm_frechet`; kept as an independent route.
    """
    w = as_matrix(w, "w")
    e = as_matrix(e, "e")
    _require_square(w, "w")
    if e.shape != w.shape:
        raise ShapeError(f"direction shape {e.shape} differs from {w.shape}")
    n = w.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = w
    big[:n, n:] = e
    big[n:, n:] = w
    return np.ascontiguousarray(expm(big)[:n, n:])


# ---------------------------------------------------------------------------
# symmetric eigenproblem and PSD inverse square roots


class SymEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eig(s) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    The input is symmetrised as ``(s + s.T) / 2``.  Each eigenvector is
    flipped so that its largest-magnitude entry is positive (first such
    entry on ties), which makes the output deterministic.
    """
    s = as_matrix(s, "s", check_finite=True)
    _require_square(s, "s")
    n = s.shape[0]
    if n == 0:
        return SymEig(np.zeros(0), np.zeros((0, 0)))
    sym = 0.5 * (s + s.T)
    _add_flops(9 * n**3)
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver did not converge: {exc}") from exc
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[idx, np.arange(n)] < 0, -1.0, 1.0)
    vecs = np.ascontiguousarray(vecs * signs)
    return SymEig(vals, vecs)


def inv_sqrt_psd(s, eps: float = 0.0, method: str = "eig", iters: int = 5) -> np.ndarray:
    """Return ``(s + eps*I) ** -1/2`` for symmetric positive semi-definite ``s``.

    ``method="eig"`` uses the eigendecomposition.  ``method="newton_schulz"``
    (alias ``"ns"``) runs ``iters`` coupled Newton-Schulz iterations after
    scaling by the trace; it only converges tightly for well-conditioned
    inputs or larger ``iters``.
    """
    s = as_matrix(s, "s")
    _require_square(s, "s")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    n = s.shape[0]
    reg = 0.5 * (s + s.T) + eps * np.eye(n)
    if method == "eig":
        vals, vecs = sym_eig(reg)
        if n and vals[0] < -1e-8:
            raise NumericError(f"input not PSD (smallest eigenvalue {vals[0]:.3e})")
        if n and vals[0] <= 0.0:
            # an exactly singular direction cannot be inverted
            raise NumericError("input is singular; use eps > 0")
        return matmul(vecs * (1.0 / np.sqrt(vals)), vecs.T)
    if method in ("newton_schulz", "ns"):
        if iters < 1:
            raise ValueError("iters must be >= 1")
        tr = float(np.trace(reg))
        if not tr > 0.0:
            raise NumericError("input not PSD (non-positive trace)")
        try:
            np.linalg.cholesky(reg + 1e-8 * np.eye(n))
        except np.linalg.LinAlgError:
            raise NumericError("input not PSD") from None
        ident = np.eye(n)
        y = reg / tr
        z = ident.copy()
        for _ in range(iters):
            t = 0.5 * (3.0 * ident - matmul(z, y))
            y = matmul(y, t)
            z = matmul(t, z)
        if not np.all(np.isfinite(z)):
            raise NumericError("Newton-Schulz iteration diverged")
        return z / math.sqrt(tr)
    raise ValueError(f"unknown method {method!r}")
