import numpy as np
import pytest

from orthokd.errors import DataError, PreconditionError, ShapeError
from orthokd.nets import (
    STREAMS,
    Mlp,
    SyntheticTask,
    accuracy,
    backward,
    class_means,
    forward,
    gen_synthetic,
    init_mlp,
    mean_pool,
    softmax_ce,
    stream,
)

from oracles import central_diff, rel_err


@pytest.mark.parametrize("activation", ["relu", "gelu", "tanh"])
def test_mlp_backward_fd(rng, activation):
    net = init_mlp([5, 7, 4, 3], activation, rng)
    x = rng.standard_normal((6, 5))
    y = rng.integers(0, 3, 6)
    up_f = rng.standard_normal((6, 4))

    def loss(params):
        trial = net.copy()
        trial.set_params(params)
        feats, logits, _ = forward(trial, x)
        return softmax_ce(logits, y)[0] + float((feats * up_f).sum())

    feats, logits, cache = forward(net, x)
    _, g = softmax_ce(logits, y)
    grads = backward(net, cache, g, up_f)
    base = net.params()
    for name, value in base.items():
        fd = central_diff(lambda v, name=name: loss({**base, name: v}), value)
        assert rel_err(grads[name], fd) < 1e-6, name


def test_features_are_last_hidden_activation(rng):
    net = init_mlp([3, 4, 2], "relu", rng)
    x = rng.standard_normal((5, 3))
    feats, logits, _ = forward(net, x)
    np.testing.assert_allclose(feats, np.maximum(x @ net.weights[0] + net.biases[0], 0))
    np.testing.assert_allclose(logits, feats @ net.weights[1] + net.biases[1])


def test_stale_cache_detected(rng):
    net = init_mlp([3, 4, 2], "relu", rng)
    _, logits, cache = forward(net, rng.standard_normal((5, 3)))
    net.set_params({k: v + 0.0 for k, v in net.params().items()})
    with pytest.raises(PreconditionError):
        backward(net, cache, np.zeros_like(logits))


def test_backward_shape_checks(rng):
    net = init_mlp([3, 4, 2], "relu", rng)
    _, _, cache = forward(net, rng.standard_normal((5, 3)))
    with pytest.raises(ShapeError):
        backward(net, cache, np.zeros((5, 3)))
    with pytest.raises(ShapeError):
        backward(net, cache, None, np.zeros((5, 5)))


def test_softmax_ce_grad_fd(rng):
    logits = rng.standard_normal((7, 4)) * 3
    y = rng.integers(0, 4, 7)
    _, g = softmax_ce(logits, y)
    assert rel_err(g, central_diff(lambda z: softmax_ce(z, y)[0], logits)) < 1e-7


def test_softmax_ce_stable_for_huge_logits():
    loss, g = softmax_ce(np.array([[1000.0, 0.0], [0.0, 1000.0]]), np.array([0, 0]))
    assert np.isfinite(loss) and loss == pytest.approx(500.0)
    assert np.all(np.isfinite(g))


def test_softmax_ce_label_range():
    with pytest.raises(DataError):
        softmax_ce(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(DataError):
        softmax_ce(np.zeros((2, 3)), np.array([-1, 0]))


def test_accuracy():
    assert accuracy(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0]]), np.array([0, 1, 1])) == pytest.approx(2 / 3)


def test_mlp_save_load_roundtrip(tmp_path, rng):
    net = init_mlp([3, 5, 2], "gelu", rng)
    net.save(tmp_path / "net.npz")
    back = Mlp.load(tmp_path / "net.npz")
    assert back.layer_dims == net.layer_dims and back.activation == "gelu"
    for a, b in zip(back.weights + back.biases, net.weights + net.biases):
        np.testing.assert_array_equal(a, b)


def test_mlp_validation(rng):
    with pytest.raises(ShapeError):
        Mlp([3, 2], [np.zeros((2, 3))], [np.zeros(2)])
    with pytest.raises(ValueError):
        init_mlp([3, 2], "swish", rng)


def test_streams_independent():
    assert len(set(STREAMS.values())) == len(STREAMS)
    a = stream(0, "student_init").standard_normal(4)
    b = stream(0, "teacher_init").standard_normal(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, stream(0, "student_init").standard_normal(4))
    with pytest.raises(KeyError):
        stream(0, "nope")


def test_synthetic_task_deterministic_and_balanced():
    task = SyntheticTask(n_classes=4, input_dim=3, n_train=40, n_test=20, seed=3)
    tr1, te1 = gen_synthetic(task)
    tr2, _ = gen_synthetic(task)
    assert tr1.x.tobytes() == tr2.x.tobytes()
    assert np.bincount(tr1.y).tolist() == [10] * 4
    assert np.bincount(te1.y).tolist() == [5] * 4


def test_class_means_separated():
    means = class_means(SyntheticTask(n_classes=6, input_dim=2, cluster_spread=2.0))
    d = np.linalg.norm(means[:, None] - means[None], axis=-1)
    assert d[~np.eye(6, dtype=bool)].min() >= 8.0 - 1e-12


def test_mean_pool():
    tokens = np.arange(24, dtype=float).reshape(2, 3, 4)
    np.testing.assert_array_equal(mean_pool(tokens), tokens.mean(axis=1))
    with pytest.raises(ShapeError):
        mean_pool(np.zeros((2, 0, 4)))
    with pytest.raises(ShapeError):
        mean_pool(np.zeros((2, 4)))
