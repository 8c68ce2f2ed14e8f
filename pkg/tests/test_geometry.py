import numpy as np
import pytest

from lbsplit.core import BlockVector, SeededRng
from lbsplit.errors import DomainError
from lbsplit.geometry import DiagonalMahalanobis, bregman, bregman_grad_x
from oracles import directional_diff


def bv(*arrays):
    return BlockVector(tuple(np.asarray(a, dtype=float) for a in arrays))


class TestBregmanDistance:
    def test_same_point_zero(self):
        geom = DiagonalMahalanobis((1.0,))
        x = bv(SeededRng(1).normal((5,)))
        assert bregman(geom, x, x) == 0.0

    def test_unit_weight_half_square(self):
        geom = DiagonalMahalanobis((1.0,))
        x, y = bv([1.0, 0.0]), bv([0.0, 0.0])
        assert abs(bregman(geom, x, y) - 0.5) < 1e-15

    def test_weight_scaling(self):
        geom = DiagonalMahalanobis((0.01,))
        rng = SeededRng(2)
        for _ in range(10):
            x, y = bv(rng.normal((7,))), bv(rng.normal((7,)))
            d = float(np.sum((x.blocks[0] - y.blocks[0]) ** 2))
            assert abs(bregman(geom, x, y) - 0.005 * d) < 1e-12

    def test_nonnegative_and_lower_bound(self):
        geom = DiagonalMahalanobis((0.3, 0.05))
        rng = SeededRng(6)
        for _ in range(20):
            x = bv(rng.normal((4,)), rng.normal((3,)))
            y = bv(rng.normal((4,)), rng.normal((3,)))
            val = bregman(geom, x, y)
            dist2 = float((x - y).norm2())
            assert val >= 0.0
            assert val + 1e-12 >= 0.5 * geom.mu * dist2

    def test_mu_is_min_weight(self):
        assert DiagonalMahalanobis((0.01, 0.001, 0.5)).mu == 0.001

    def test_positive_weights_required(self):
        with pytest.raises(DomainError):
            DiagonalMahalanobis((0.1, 0.0))


class TestBregmanGradient:
    def test_same_point_zero(self):
        geom = DiagonalMahalanobis((0.2, 0.4))
        x = bv([1.0, 2.0], [3.0])
        g = bregman_grad_x(geom, x, x)
        assert g.norm() == 0.0

    def test_diagonal_formula(self):
        geom = DiagonalMahalanobis((0.2, 0.4))
        x = bv([1.0, 2.0], [3.0])
        y = bv([0.0, 1.0], [5.0])
        g = bregman_grad_x(geom, x, y)
        assert np.allclose(g.blocks[0], 0.2 * np.array([1.0, 1.0]))
        assert np.allclose(g.blocks[1], 0.4 * np.array([-2.0]))

    def test_matches_finite_difference(self):
        geom = DiagonalMahalanobis((0.07,))
        rng = SeededRng(8)
        xa = rng.normal((6,))
        ya = rng.normal((6,))
        d = rng.normal((6,))
        d /= np.linalg.norm(d)

        def fn(arr):
            return bregman(geom, bv(arr), bv(ya))

        num = directional_diff(fn, xa, d)
        ana = float(np.dot(bregman_grad_x(geom, bv(xa), bv(ya)).blocks[0], d))
        assert abs(num - ana) / max(abs(ana), 1e-12) < 1e-5
