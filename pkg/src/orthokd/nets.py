"""Small MLPs with hand-written backprop, synthetic data and pooling.

Networks are plain containers of weight matrices; ``forward`` returns a
cache that ``backward`` consumes.  The feature tap is the activation of
the last hidden layer, i.e. the input of the classifier layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, PreconditionError, ShapeError
from .linalg import as_matrix, matmul

# Independent random streams derived from one seed.  Giving each consumer
# its own stream keeps e.g. projector initialisation from shifting the
# shuffling of the student data.
STREAMS = {
    "data": 0,
    "teacher_init": 1,
    "teacher_shuffle": 2,
    "student_init": 3,
    "student_shuffle": 4,
    "projector_init": 5,
    "probe": 6,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name]])


# ---------------------------------------------------------------------------
# activations: (f, df) where df takes the pre-activation

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0.0).astype(np.float64)


def _gelu(x):
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_K * x**3)))


def _gelu_grad(x):
    inner = _GELU_C * (x + _GELU_K * x**3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_K * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "gelu": (_gelu, _gelu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


def check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


# ---------------------------------------------------------------------------
# MLP


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        check_activation(self.activation)
        if len(self.layer_dims) < 2:
            raise ShapeError("an MLP needs at least input and output dims")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("one weight matrix and bias per layer expected")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ShapeError(f"layer {i}: weight {w.shape}, bias {b.shape}, expected {want}")

    @property
    def feature_dim(self) -> int:
        return self.layer_dims[-2]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = params[f"w{i}"]
            self.biases[i] = params[f"b{i}"]

    def copy(self) -> Mlp:
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def save(self, path) -> None:
        np.savez(
            path,
            layer_dims=np.asarray(self.layer_dims, dtype=np.int64),
            activation=np.asarray(self.activation),
            **self.params(),
        )

    @classmethod
    def load(cls, path) -> Mlp:
        with np.load(path) as f:
            dims = [int(d) for d in f["layer_dims"]]
            n = len(dims) - 1
            return cls(
                dims,
                [np.ascontiguousarray(f[f"w{i}"]) for i in range(n)],
                [np.ascontiguousarray(f[f"b{i}"]) for i in range(n)],
                str(f["activation"]),
            )


def init_mlp(layer_dims, activation: str, rng: np.random.Generator) -> Mlp:
    """He-normal weights (Glorot-normal for tanh), zero biases."""
    check_activation(activation)
    gain = 1.0 if activation == "tanh" else 2.0
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(gain / fan_in))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases, activation)


@dataclass
class ForwardCache:
    weights: list[np.ndarray]
    inputs: list[np.ndarray]  # input of each layer
    preacts: list[np.ndarray]  # pre-activation of each hidden layer
    features: np.ndarray


def forward(net: Mlp, x) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Return ``(features, logits, cache)`` for a batch ``x``."""
    x = as_matrix(x, "x")
    if x.shape[1] != net.layer_dims[0]:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {net.layer_dims[0]}")
    act, _ = ACTIVATIONS[net.activation]
    inputs, preacts = [], []
    h = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        inputs.append(h)
        z = matmul(h, w) + b
        preacts.append(z)
        h = act(z)
    inputs.append(h)
    logits = matmul(h, net.weights[-1]) + net.biases[-1]
    return h, logits, ForwardCache(list(net.weights), inputs, preacts, h)


def backward(net: Mlp, cache: ForwardCache, grad_logits=None, grad_features=None) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients at the logits and at the feature tap.

    The two upstream gradients are summed at the feature node.  Either may be
    ``None`` (treated as zero).
    """
    if len(cache.weights) != len(net.weights) or any(
        cw is not w for cw, w in zip(cache.weights, net.weights)
    ):
        raise PreconditionError("stale cache: network parameters changed since forward")
    _, dact = ACTIVATIONS[net.activation]
    n_layers = len(net.weights)
    b, _ = cache.inputs[0].shape
    if grad_logits is None:
        grad_logits = np.zeros((b, net.n_classes))
    grad_logits = as_matrix(grad_logits, "grad_logits")
    if grad_logits.shape != (b, net.n_classes):
        raise ShapeError(f"grad_logits shape {grad_logits.shape} != {(b, net.n_classes)}")
    grads = {}
    last = n_layers - 1
    grads[f"w{last}"] = matmul(cache.inputs[last].T, grad_logits)
    grads[f"b{last}"] = grad_logits.sum(axis=0)
    g = matmul(grad_logits, net.weights[last].T)
    if grad_features is not None:
        grad_features = as_matrix(grad_features, "grad_features")
        if grad_features.shape != g.shape:
            raise ShapeError(f"grad_features shape {grad_features.shape} != {g.shape}")
        g = g + grad_features
    for i in range(last - 1, -1, -1):
        g = g * dact(cache.preacts[i])
        grads[f"w{i}"] = matmul(cache.inputs[i].T, g)
        grads[f"b{i}"] = g.sum(axis=0)
        if i:
            g = matmul(g, net.weights[i].T)
    return grads


def softmax_ce(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient ``(softmax - onehot) / b``."""
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} != ({b},)")
    if b and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"label out of range [0, {c})")
    labels = labels.astype(np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(b)
    loss = float(np.mean(lse - shifted[rows, labels])) if b else 0.0
    probs = np.exp(shifted - lse[:, None])
    probs[rows, labels] -= 1.0
    return loss, probs / max(b, 1)


def accuracy(logits, labels) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def predict_features(net: Mlp, x, batch_size: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    feats, logits = [], []
    for i in range(0, x.shape[0], batch_size):
        f, lg, _ = forward(net, x[i:i + batch_size])
        feats.append(f)
        logits.append(lg)
    return np.concatenate(feats), np.concatenate(logits)


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class SyntheticTask:
    n_classes: int = 10
    input_dim: int = 32
    n_train: int = 1024
    n_test: int = 512
    seed: int = 0
    cluster_spread: float = 1.0


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray = field(repr=False)

    def __len__(self):
        return self.x.shape[0]


def class_means(task: SyntheticTask) -> np.ndarray:
    rng = stream(task.seed, "data")
    means = rng.standard_normal((task.n_classes, task.input_dim))
    if task.n_classes > 1:
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        min_dist = dist[~np.eye(task.n_classes, dtype=bool)].min()
        need = 4.0 * task.cluster_spread
        if min_dist < need:
            means *= need / min_dist
    return means


def gen_synthetic(task: SyntheticTask) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian clusters, balanced labels, deterministic in ``task.seed``."""
    if task.n_classes < 1 or task.input_dim < 1:
        raise ValueError("n_classes and input_dim must be positive")
    means = class_means(task)
    # the draws below follow class_means on a fresh generator of the same
    # stream, skipped past the means
    rng = stream(task.seed, "data")
    rng.standard_normal((task.n_classes, task.input_dim))
    out = []
    for n in (task.n_train, task.n_test):
        y = rng.permutation(np.arange(n) % task.n_classes)
        x = means[y] + task.cluster_spread * rng.standard_normal((n, task.input_dim))
        out.append(Dataset(np.ascontiguousarray(x), y.astype(np.int64)))
    return out[0], out[1]


def mean_pool(tokens) -> np.ndarray:
    """Average a ``(b, t, d)`` token stack over the token axis."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 3:
        raise ShapeError(f"expected a (b, t, d) stack, got shape {tokens.shape}")
    if tokens.shape[1] == 0:
        raise ShapeError("cannot pool zero tokens")
    return np.ascontiguousarray(tokens.mean(axis=1))
