"""Projectors from the student feature space (d_s) into the teacher's (d_t).

The orthogonal projector is parameterised by an unconstrained square
matrix ``a``: ``W = a - a.T`` is skew-symmetric, ``exp(W)`` (or its Cayley
transform) is a rotation in SO(d_t), and keeping its first d_s rows gives
a d_s x d_t matrix with orthonormal rows.  Gradient descent on ``a``
therefore never leaves the constraint set.

The linear, MLP and ensemble projectors are unconstrained baselines; the
SVD target replaces the projector with a handcrafted target in the
student's own space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import as_matrix, expm, expm_frechet, matmul, solve, sym_eig
from .nets import ACTIVATIONS, check_activation

KINDS = ("orthogonal", "linear", "mlp", "ensemble", "svd_target")
METHODS = ("expm", "cayley")


@dataclass(frozen=True)
class ProjectorSpec:
    """Which projector to use.

    ``method`` only matters for ``orthogonal``; ``hidden``/``activation``
    for ``mlp`` (``hidden=0`` means d_t); ``n`` for ``ensemble``;
    ``rank`` for ``svd_target`` (``rank=0`` means d_s).
    """

    kind: str = "orthogonal"
    d_s: int = 32
    d_t: int = 128
    method: str = "expm"
    hidden: int = 0
    activation: str = "relu"
    n: int = 3
    rank: int = 0
    init_std: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown projector kind {self.kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown orthogonal method {self.method!r}")
        if self.d_s < 1 or self.d_t < 1:
            raise ConfigError("feature dims must be positive")
        if self.kind == "orthogonal" and self.d_s > self.d_t:
            raise ConfigError("student wider than teacher unsupported")
        if self.kind == "ensemble" and self.n < 1:
            raise ConfigError("ensemble needs n >= 1")
        check_activation(self.activation)

    @property
    def hidden_dim(self) -> int:
        return self.hidden or self.d_t

    @property
    def target_rank(self) -> int:
        return self.rank or self.d_s


@dataclass
class SkewParam:
    a: np.ndarray
    d_s: int
    d_t: int

    def __post_init__(self):
        self.a = as_matrix(self.a, "a")
        if self.a.shape != (self.d_t, self.d_t):
            raise ShapeError(f"a must be {self.d_t}x{self.d_t}, got {self.a.shape}")
        if self.d_s > self.d_t:
            raise ConfigError("student wider than teacher unsupported")


def skew(a) -> np.ndarray:
    """``a - a.T``; exactly antisymmetric because IEEE subtraction is."""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"a must be square, got {a.shape}")
    return a - a.T


def cayley(w) -> np.ndarray:
    """``(I - W)(I + W)^{-1}``.  For real skew ``W``, ``I + W`` is never singular."""
    w = as_matrix(w, "w")
    ident = np.eye(w.shape[0])
    # both factors are functions of W and commute
    return solve(ident + w, ident - w)


def rotation(p: SkewParam, method: str = "expm") -> np.ndarray:
    w = skew(p.a)
    if method == "expm":
        return expm(w)
    if method == "cayley":
        return cayley(w)
    raise ConfigError(f"unknown orthogonal method {method!r}")


def build_projection(p: SkewParam, method: str = "expm") -> np.ndarray:
    """First ``d_s`` rows of the rotation generated by ``p``."""
    if p.d_s > p.d_t:
        raise ConfigError("student wider than teacher unsupported")
    return np.ascontiguousarray(rotation(p, method)[: p.d_s])


def project(z_s, p) -> np.ndarray:
    z_s = as_matrix(z_s, "z_s")
    p = as_matrix(p, "p")
    if z_s.shape[1] != p.shape[0]:
        raise ShapeError(f"cannot project features {z_s.shape} with {p.shape}")
    return matmul(z_s, p)


def grad_orthogonal(p: SkewParam, upstream, method: str = "expm") -> np.ndarray:
    """Pull a gradient w.r.t. the projection back to the free parameter ``a``."""
    upstream = as_matrix(upstream, "upstream")
    if upstream.shape != (p.d_s, p.d_t):
        raise ShapeError(f"upstream must be {(p.d_s, p.d_t)}, got {upstream.shape}")
    g = np.zeros((p.d_t, p.d_t))
    g[: p.d_s] = upstream
    w = skew(p.a)
    if method == "expm":
        # <L(W, E), G> = <E, L(W^T, G)>
        _, grad_w = expm_frechet(np.ascontiguousarray(w.T), g)
    elif method == "cayley":
        # dQ = -(I + Q) dW (I + W)^{-1}
        ident = np.eye(p.d_t)
        m = solve(ident + w, ident)
        q = matmul(ident - w, m)
        grad_w = -matmul(matmul((ident + q).T, g), m.T)
    else:
        raise ConfigError(f"unknown orthogonal method {method!r}")
    return grad_w - grad_w.T


# ---------------------------------------------------------------------------
# baselines


def init_params(spec: ProjectorSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d_s, d_t = spec.d_s, spec.d_t
    if spec.kind == "orthogonal":
        return {"a": rng.standard_normal((d_t, d_t)) * spec.init_std}
    if spec.kind == "linear":
        return {"p": rng.standard_normal((d_s, d_t)) / np.sqrt(d_s)}
    if spec.kind == "ensemble":
        return {f"p{k}": rng.standard_normal((d_s, d_t)) / np.sqrt(d_s) for k in range(spec.n)}
    if spec.kind == "mlp":
        h = spec.hidden_dim
        return {
            "w1": rng.standard_normal((d_s, h)) * np.sqrt(2.0 / d_s),
            "b1": np.zeros(h),
            "w2": rng.standard_normal((h, d_t)) * np.sqrt(2.0 / h),
            "b2": np.zeros(d_t),
        }
    return {}


def _check_in(z_s, d_s):
    z_s = as_matrix(z_s, "z_s")
    if z_s.shape[1] != d_s:
        raise ShapeError(f"student features have {z_s.shape[1]} columns, projector expects {d_s}")
    return z_s


def forward_baseline(spec: ProjectorSpec, params, z_s):
    """Forward pass of an unconstrained projector: ``(output, cache)``."""
    z_s = _check_in(z_s, spec.d_s)
    if spec.kind == "linear":
        return project(z_s, params["p"]), (z_s,)
    if spec.kind == "ensemble":
        out = project(z_s, params["p0"])
        for k in range(1, spec.n):
            out = out + project(z_s, params[f"p{k}"])
        return out / spec.n, (z_s,)
    if spec.kind == "mlp":
        act, _ = ACTIVATIONS[spec.activation]
        h = matmul(z_s, params["w1"]) + params["b1"]
        g = act(h)
        return matmul(g, params["w2"]) + params["b2"], (z_s, h, g)
    raise ConfigError(f"{spec.kind!r} is not a baseline projector")


def backward_baseline(spec: ProjectorSpec, params, cache, grad_out):
    """Return ``(param_grads, grad_z_s)`` for :func:`forward_baseline`."""
    grad_out = as_matrix(grad_out, "grad_out")
    z_s = cache[0]
    if spec.kind == "linear":
        return {"p": matmul(z_s.T, grad_out)}, matmul(grad_out, params["p"].T)
    if spec.kind == "ensemble":
        g = grad_out / spec.n
        gp = matmul(z_s.T, g)
        grads = {f"p{k}": gp.copy() for k in range(spec.n)}
        gz = matmul(g, params["p0"].T)
        for k in range(1, spec.n):
            gz = gz + matmul(g, params[f"p{k}"].T)
        return grads, gz
    if spec.kind == "mlp":
        _, dact = ACTIVATIONS[spec.activation]
        _, h, g = cache
        grads = {"w2": matmul(g.T, grad_out), "b2": grad_out.sum(axis=0)}
        gh = matmul(grad_out, params["w2"].T) * dact(h)
        grads["w1"] = matmul(z_s.T, gh)
        grads["b1"] = gh.sum(axis=0)
        return grads, matmul(gh, params["w1"].T)
    raise ConfigError(f"{spec.kind!r} is not a baseline projector")


# ---------------------------------------------------------------------------
# handcrafted target


def svd_basis(z_t, rank: int):
    """Column mean, top-``rank`` right-singular directions and all eigenvalues
    (descending) of the centred teacher features."""
    z_t = as_matrix(z_t, "z_t")
    b, d_t = z_t.shape
    if rank < 1 or rank > min(b, d_t):
        raise ConfigError(f"svd rank {rank} must lie in [1, min(b, d_t) = {min(b, d_t)}]")
    mean = z_t.mean(axis=0)
    zc = z_t - mean
    vals, vecs = sym_eig(matmul(zc.T, zc))
    order = np.arange(d_t)[::-1]
    return mean, np.ascontiguousarray(vecs[:, order[:rank]]), vals[order]


def svd_teacher_target(z_t, rank: int) -> np.ndarray:
    """Centred teacher features expressed in their top-``rank`` principal directions."""
    mean, basis, _ = svd_basis(z_t, rank)
    return matmul(as_matrix(z_t) - mean, basis)


# ---------------------------------------------------------------------------
# uniform wrapper used by the trainer


class Projector:
    """Parameters plus forward/backward for any non-SVD projector kind."""

    def __init__(self, spec: ProjectorSpec, params: dict[str, np.ndarray]):
        if spec.kind == "svd_target":
            raise ConfigError("svd_target has no trainable projector")
        self.spec = spec
        self.params = params

    @classmethod
    def init(cls, spec: ProjectorSpec, rng: np.random.Generator) -> Projector:
        return cls(spec, init_params(spec, rng))

    @property
    def skew_param(self) -> SkewParam:
        return SkewParam(self.params["a"], self.spec.d_s, self.spec.d_t)

    def matrix(self) -> np.ndarray | None:
        """The projection matrix for linear kinds, ``None`` for the MLP."""
        kind = self.spec.kind
        if kind == "orthogonal":
            return build_projection(self.skew_param, self.spec.method)
        if kind == "linear":
            return self.params["p"]
        if kind == "ensemble":
            total = self.params["p0"]
            for k in range(1, self.spec.n):
                total = total + self.params[f"p{k}"]
            return total / self.spec.n
        return None

    def forward(self, z_s):
        if self.spec.kind == "orthogonal":
            z_s = _check_in(z_s, self.spec.d_s)
            p = self.matrix()
            return project(z_s, p), (z_s, p)
        return forward_baseline(self.spec, self.params, z_s)

    def backward(self, cache, grad_out):
        if self.spec.kind == "orthogonal":
            z_s, p = cache
            grad_out = as_matrix(grad_out, "grad_out")
            g_p = matmul(z_s.T, grad_out)
            g_a = grad_orthogonal(self.skew_param, g_p, self.spec.method)
            return {"a": g_a}, matmul(grad_out, p.T)
        return backward_baseline(self.spec, self.params, cache, grad_out)

    def orthogonality_error(self) -> float:
        p = self.matrix()
        if p is None:
            return float("nan")
        return float(np.linalg.norm(matmul(p, p.T) - np.eye(p.shape[0])))
