"""Self-test suite behind ``orthokd check``.

Each check draws seeded random instances, measures the worst residual and
compares it with a fixed tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distill import diversity_bound, kernel_preservation_error
from .linalg import expm, expm_frechet, expm_frechet_block, matmul, onenorm
from .normalizer import whiten
from .projector import SkewParam, build_projection, grad_orthogonal


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} {self.residual:.3e} {self.tolerance:.1e}"


def _rand_skew_param(rng, d_s, d_t, scale):
    return SkewParam(rng.standard_normal((d_t, d_t)) * scale, d_s, d_t)


def check_orthogonality(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        d_t = int(rng.integers(2, 33))
        d_s = int(rng.integers(1, d_t + 1))
        p = _rand_skew_param(rng, d_s, d_t, rng.uniform(0.01, 0.5))
        for method in ("expm", "cayley"):
            mat = build_projection(p, method)
            worst = max(worst, float(np.linalg.norm(matmul(mat, mat.T) - np.eye(d_s))))
    return CheckResult("orthogonality", worst, 1e-8)


def check_gram_preservation(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        d_s, d_t = 8, 16
        p = build_projection(_rand_skew_param(rng, d_s, d_t, 0.3))
        z = rng.standard_normal((int(rng.integers(2, 40)), d_s))
        worst = max(worst, kernel_preservation_error(z, p))
    return CheckResult("gram_preservation", worst, 1e-8)


def check_frechet_fd(rng, trials=10, h=1e-5):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        w = rng.standard_normal((n, n))
        e = rng.standard_normal((n, n))
        _, ell = expm_frechet(w, e)
        fd = (expm(w + h * e) - expm(w - h * e)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(ell - fd) / np.linalg.norm(fd)))
    return CheckResult("frechet_fd", worst, 1e-5)


def check_frechet_block(rng, trials=10):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        w = rng.standard_normal((n, n))
        e = rng.standard_normal((n, n))
        _, ell = expm_frechet(w, e)
        worst = max(worst, float(np.linalg.norm(ell - expm_frechet_block(w, e))))
    return CheckResult("frechet_block", worst, 1e-9)


def check_grad_orthogonal(rng, trials=5, h=1e-6):
    worst = 0.0
    for _ in range(trials):
        d_s, d_t = 3, 5
        p = _rand_skew_param(rng, d_s, d_t, 0.3)
        target = rng.standard_normal((d_s, d_t))
        grad = grad_orthogonal(p, target)
        fd = np.zeros_like(p.a)
        for idx in np.ndindex(*p.a.shape):
            ap, am = p.a.copy(), p.a.copy()
            ap[idx] += h
            am[idx] -= h
            fp = float((build_projection(SkewParam(ap, d_s, d_t)) * target).sum())
            fm = float((build_projection(SkewParam(am, d_s, d_t)) * target).sum())
            fd[idx] = (fp - fm) / (2 * h)
        worst = max(worst, float(np.linalg.norm(grad - fd) / np.linalg.norm(fd)))
    return CheckResult("grad_orthogonal_fd", worst, 1e-5)


def check_expm_skew(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 17))
        a = rng.standard_normal((n, n))
        w = a - a.T
        w *= rng.uniform(0.1, 10.0) / onenorm(w)
        r = expm(w)
        worst = max(worst, float(np.linalg.norm(matmul(r, r.T) - np.eye(n))))
    return CheckResult("expm_skew_orthogonal", worst, 1e-9)


def check_whitening(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        z = whiten(rng.standard_normal((64, 8)))
        worst = max(worst, float(np.linalg.norm(matmul(z.T, z) - np.eye(8))))
    return CheckResult("whitening_gram", worst, 1e-3)


def check_diversity_bound(rng, trials=200):
    failures = 0
    for t in range(trials):
        z_t = whiten(rng.standard_normal((32, 8)))
        scale = 10 ** rng.uniform(-2, 0.5)
        noise = scale * rng.standard_normal((32, 8))
        z_s = noise if t % 2 else z_t + noise
        if not diversity_bound(z_s, z_t).holds:
            failures += 1
    return CheckResult("diversity_bound_mc", failures / trials, 0.0)


CHECKS = (
    check_expm_skew,
    check_orthogonality,
    check_gram_preservation,
    check_frechet_block,
    check_frechet_fd,
    check_grad_orthogonal,
    check_whitening,
    check_diversity_bound,
)


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]
