import itertools

import numpy as np
import pytest

from orthokd.distill import (
    LAMBDA,
    DiversityBoundReport,
    cross_corr,
    diversity_bound,
    gram,
    gram_relative_error,
    kernel_preservation_error,
    l2_distill_loss,
)
from orthokd.errors import PreconditionError, ShapeError
from orthokd.normalizer import whiten
from orthokd.projector import SkewParam, build_projection

from oracles import central_diff, rel_err


def test_l2_loss_value_and_grad(rng):
    a, b = rng.standard_normal((2, 5, 3))
    loss, g = l2_distill_loss(a, b)
    assert loss == pytest.approx(((a - b) ** 2).sum() / 5)
    fd = central_diff(lambda x: l2_distill_loss(x, b)[0], a)
    assert rel_err(g, fd) < 1e-8


def test_l2_loss_zero_at_target(rng):
    a = rng.standard_normal((4, 4))
    loss, g = l2_distill_loss(a, a)
    assert loss == 0.0 and not np.any(g)


def test_l2_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        l2_distill_loss(np.ones((2, 3)), np.ones((2, 4)))


def test_gram(rng):
    z = rng.standard_normal((5, 3))
    np.testing.assert_allclose(gram(z), z @ z.T, rtol=1e-14)


def test_kernel_preserved_by_orthogonal_projection(rng):
    p = build_projection(SkewParam(rng.standard_normal((12, 12)), 5, 12))
    z = rng.standard_normal((30, 5))
    assert kernel_preservation_error(z, p) < 1e-12


def test_kernel_changed_by_random_linear_map(rng):
    p = rng.standard_normal((5, 12))
    assert kernel_preservation_error(rng.standard_normal((30, 5)), p) > 1e-3


def test_gram_relative_error_zero_input():
    assert gram_relative_error(np.zeros((3, 2)), np.zeros((3, 4))) == 0.0
    assert gram_relative_error(np.zeros((3, 2)), np.ones((3, 4))) == float("inf")


def test_cross_corr_definition(rng):
    zs, zt = rng.standard_normal((2, 10, 4))
    c = cross_corr(zs, zt)
    for i, j in itertools.product(range(4), repeat=2):
        assert c[i, j] == pytest.approx(np.linalg.norm(zs[:, j] - zt[:, i]), rel=1e-14)


def _brute_force(zs, zt):
    d = zs.shape[1]
    loss = 0.0
    relaxed = cs = 0.0
    for i, j in itertools.permutations(range(d), 2):
        a = zs[:, j] - zt[:, i]
        c = zt[:, j] - zt[:, i]
        loss += float(np.sum((a - c) ** 2))
        na = np.linalg.norm(a)
        relaxed += na**2
        cs += na**2 + 2 - 2 * np.sqrt(2) * na
    return loss, 2 * d * (d - 1) - LAMBDA * relaxed, cs


@pytest.mark.parametrize("scale", [0.05, 3.0])
def test_diversity_bound_matches_brute_force(rng, scale):
    zt = whiten(rng.standard_normal((32, 6)), eps=1e-12)
    zs = zt + scale * rng.standard_normal((32, 6))
    rep = diversity_bound(zs, zt)
    loss, relaxed, cs = _brute_force(zs, zt)
    assert rep.loss == pytest.approx(loss, rel=1e-12)
    expected = relaxed if rep.form == "relaxed" else cs
    assert rep.bound == pytest.approx(expected, rel=1e-10, abs=1e-10)
    assert rep.holds
    assert rep.const == 2 * 6 * 5


def test_diversity_bound_forms(rng):
    zt = whiten(rng.standard_normal((32, 4)), eps=1e-12)
    # student column j copies teacher column j-1, so those pairs are close
    near = diversity_bound(np.roll(zt, 1, axis=1), zt)
    assert near.form == "cauchy_schwarz" and near.violating_pairs > 0
    far = diversity_bound(5.0 * rng.standard_normal((32, 4)), zt)
    assert far.form == "relaxed" and far.violating_pairs == 0


def test_diversity_bound_requires_whitened_teacher(rng):
    zt = rng.standard_normal((32, 4))
    with pytest.raises(PreconditionError):
        diversity_bound(zt, zt)


def test_diversity_csv_row(rng):
    zt = whiten(rng.standard_normal((16, 3)), eps=1e-12)
    rep = diversity_bound(zt + 2.0, zt)
    fields = rep.csv_row().split(",")
    assert len(fields) == len(DiversityBoundReport.CSV_HEADER.split(","))
    assert fields[4] in ("0", "1")
    assert float(fields[3]) == LAMBDA
