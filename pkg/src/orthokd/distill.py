"""Distillation loss and the diagnostics around it.

``l2_distill_loss`` is the training objective (summed over features,
averaged over the batch).  The rest are instruments: batch Gram
matrices, how well a projection preserves them, the column-distance
matrix between student and teacher features, and a checker for the lower
bound that a whitened teacher puts on the loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import PreconditionError, ShapeError
from .linalg import as_matrix, matmul

LAMBDA = 3.0
WHITENING_TOL = 1e-2


def gram(z) -> np.ndarray:
    """Linear-kernel matrix ``z @ z.T`` (b x b)."""
    z = as_matrix(z, "z")
    return matmul(z, np.ascontiguousarray(z.T))


def _same_shape(x, y, xn, yn):
    x = as_matrix(x, xn)
    y = as_matrix(y, yn)
    if x.shape != y.shape:
        raise ShapeError(f"{xn} shape {x.shape} != {yn} shape {y.shape}")
    return x, y


def l2_distill_loss(z_proj, z_t) -> tuple[float, np.ndarray]:
    """Squared error summed over entries, divided by the batch size.

    Returns ``(loss, grad_z_proj)``.
    """
    z_proj, z_t = _same_shape(z_proj, z_t, "z_proj", "z_t")
    b = max(z_proj.shape[0], 1)
    diff = z_proj - z_t
    return float((diff * diff).sum() / b), 2.0 * diff / b


def cross_corr(z_s, z_t) -> np.ndarray:
    """``C[i, j] = ||z_s[:, j] - z_t[:, i]||`` (d x d, not symmetric in general)."""
    z_s, z_t = _same_shape(z_s, z_t, "z_s", "z_t")
    return _backend.col_dist(z_s, z_t)


def gram_relative_error(z, y) -> float:
    """``||y y^T - z z^T||_F / ||z z^T||_F`` for row-aligned feature batches."""
    k = gram(z)
    denom = float(np.linalg.norm(k))
    if denom == 0.0:
        return 0.0 if not np.any(y) else float("inf")
    return float(np.linalg.norm(gram(y) - k)) / denom


def kernel_preservation_error(z, p) -> float:
    """Relative change of the batch Gram matrix when ``z`` is mapped through ``p``."""
    z = as_matrix(z, "z")
    p = as_matrix(p, "p")
    if z.shape[1] != p.shape[0]:
        raise ShapeError(f"cannot project {z.shape} with {p.shape}")
    return gram_relative_error(z, matmul(z, p))


@dataclass(frozen=True)
class DiversityBoundReport:
    """Outcome of :func:`diversity_bound`.

    ``form`` is ``"relaxed"`` when every student/teacher column pair is at
    distance >= 1 and the final ``const - lambda * sum C^2`` bound applies,
    otherwise ``"cauchy_schwarz"`` and ``bound`` is the tighter
    intermediate bound before that relaxation.
    """

    loss: float
    bound: float
    const: float
    lambda_: float
    holds: bool
    form: str
    violating_pairs: int
    gram_residual: float

    CSV_HEADER = "loss,bound,const,lambda,holds,form"

    def csv_row(self) -> str:
        return f"{self.loss!r},{self.bound!r},{self.const!r},{self.lambda_!r},{int(self.holds)},{self.form}"


def diversity_bound(z_s, z_t_whitened, tol: float = WHITENING_TOL) -> DiversityBoundReport:
    """Check the lower bound on the L2 loss implied by a whitened teacher.

    With ``a_ij = z_s[:, j] - z_t[:, i]`` and ``c_ij = z_t[:, j] - z_t[:, i]``
    the loss is written over ordered pairs ``i != j`` as
    ``sum ||a_ij - c_ij||^2`` (equal to ``(d - 1) * ||z_s - z_t||_F^2``).
    Whitening gives ``||c_ij||^2 = 2``; Cauchy-Schwarz then yields
    ``sum ||a_ij||^2 + 2 - 2*sqrt(2)*||a_ij||`` and, when every
    ``||a_ij|| >= 1``, the further relaxation ``2 d (d - 1) - 3 sum ||a_ij||^2``.
    The loss is the raw sum, not batch-averaged.

    Raises
    ------
    PreconditionError
        If ``||z_t^T z_t - I||_F`` exceeds ``tol``.
    """
    z_s, z_t = _same_shape(z_s, z_t_whitened, "z_s", "z_t_whitened")
    d = z_s.shape[1]
    residual = float(np.linalg.norm(matmul(z_t.T, z_t) - np.eye(d)))
    if residual > tol:
        raise PreconditionError(
            f"teacher features are not whitened: ||Z^T Z - I||_F = {residual:.3e} > {tol:.1e}"
        )
    diff = z_s - z_t
    loss = (d - 1) * float((diff * diff).sum())

    c = cross_corr(z_s, z_t)  # c[i, j] = ||a_ij||
    off = ~np.eye(d, dtype=bool)
    dist = c[off]
    const = 2.0 * d * (d - 1)
    violating = int(np.count_nonzero(dist < 1.0))
    if violating == 0:
        bound = const - LAMBDA * float((dist * dist).sum())
        form = "relaxed"
    else:
        bound = float((dist * dist + 2.0 - 2.0 * math.sqrt(2.0) * dist).sum())
        form = "cauchy_schwarz"
    return DiversityBoundReport(
        loss=loss,
        bound=bound,
        const=const,
        lambda_=LAMBDA,
        holds=loss >= bound - 1e-8,
        form=form,
        violating_pairs=violating,
        gram_residual=residual,
    )
