"""Teacher-feature normalisation.

Applied to the frozen teacher branch only, so none of these functions
has a backward pass.  Variances use the population convention (divide by
the number of samples).  Whitening is against the raw centred Gram matrix
``zc.T @ zc`` without a ``1/b`` factor, so the output satisfies
``z.T @ z == I`` rather than unit covariance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import as_matrix, inv_sqrt_psd, matmul

VARIANTS = ("none", "standardize", "layernorm", "whiten")
WHITEN_METHODS = ("eig", "ns")


@dataclass(frozen=True)
class NormalizerKind:
    variant: str = "standardize"
    eps: float = 1e-5
    method: str = "eig"
    iters: int = 5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown normalizer {self.variant!r}; choose from {VARIANTS}")
        if self.method not in WHITEN_METHODS:
            raise ConfigError(f"unknown whitening method {self.method!r}")
        if self.variant != "none" and not self.eps > 0:
            raise ConfigError("eps must be > 0")
        if self.iters < 1:
            raise ConfigError("ns_iters must be >= 1")

    def __call__(self, z) -> np.ndarray:
        return normalize(z, self)


def standardize(z, eps: float = 1e-5) -> np.ndarray:
    """Zero mean, unit variance per column.

    The denominator is ``max(std, eps)``, so constant columns map to zero
    instead of dividing by zero.
    """
    z = as_matrix(z, "z")
    if z.shape[0] < 2:
        raise ConfigError("standardize needs at least 2 rows")
    zc = z - z.mean(axis=0)
    std = np.sqrt((zc * zc).mean(axis=0))
    return zc / np.maximum(std, eps)


def layer_norm(z, eps: float = 1e-5) -> np.ndarray:
    """Zero mean, unit variance per row."""
    z = as_matrix(z, "z")
    if z.shape[1] < 2:
        raise ConfigError("layer_norm needs at least 2 columns")
    zc = z - z.mean(axis=1, keepdims=True)
    std = np.sqrt((zc * zc).mean(axis=1, keepdims=True))
    return zc / np.maximum(std, eps)


def whiten(z, eps: float = 1e-5, method: str = "eig", iters: int = 5) -> np.ndarray:
    """Centre the columns, then decorrelate them so that ``out.T @ out ~= I``.

    With fewer rows than columns the Gram matrix is singular; ``eps`` keeps
    the inverse square root finite and the identity only holds on the
    span of the data.
    """
    z = as_matrix(z, "z", check_finite=True)
    zc = z - z.mean(axis=0)
    gram = matmul(zc.T, zc)
    m = "newton_schulz" if method == "ns" else method
    return matmul(zc, inv_sqrt_psd(gram, eps, m, iters))


def normalize(z, kind: NormalizerKind) -> np.ndarray:
    if kind.variant == "none":
        return as_matrix(z, "z")
    if kind.variant == "standardize":
        return standardize(z, kind.eps)
    if kind.variant == "layernorm":
        return layer_norm(z, kind.eps)
    return whiten(z, kind.eps, kind.method, kind.iters)
