import numpy as np
import pytest

from lbsplit.core import (
    BlockVector,
    SeededRng,
    axpy,
    block_norm2,
    gaussian_noise,
    inner,
)
from lbsplit.errors import DimensionError, DomainError


def bv(*arrays):
    return BlockVector(tuple(np.asarray(a, dtype=float) for a in arrays))


class TestInner:
    def test_hand_value(self):
        assert inner(np.array([1.0, 0.0, 2.0]), np.array([3.0, 4.0, 5.0])) == 13.0

    def test_zero(self):
        x = np.zeros(4)
        assert inner(x, x) == 0.0

    def test_matches_norm(self):
        x = SeededRng(7).normal((100,))
        assert abs(inner(x, x) - np.linalg.norm(x) ** 2) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            inner(np.zeros(3), np.zeros(4))

    def test_cauchy_schwarz(self):
        rng = SeededRng(3)
        for _ in range(50):
            x = rng.normal((11,))
            y = rng.normal((11,))
            assert abs(inner(x, y)) <= np.linalg.norm(x) * np.linalg.norm(y) + 1e-12


class TestBlockNorm:
    def test_single_block(self):
        assert block_norm2(bv([3.0, 4.0])) == 25.0

    def test_three_blocks(self):
        assert block_norm2(bv([1.0], [2.0], [2.0])) == 9.0

    def test_definiteness(self):
        rng = SeededRng(9)
        for _ in range(20):
            x = bv(rng.normal((5,)))
            assert (block_norm2(x) == 0.0) == bool(np.all(x.blocks[0] == 0.0))
        assert block_norm2(bv(np.zeros(6), np.zeros((2, 2)))) == 0.0


class TestAxpy:
    def test_alpha_zero(self):
        x, y = bv([1.0, 2.0]), bv([5.0, 6.0])
        out = axpy(0.0, x, y)
        assert np.array_equal(out.blocks[0], y.blocks[0])

    def test_alpha_one_y_zero(self):
        x = bv([1.0, -2.0])
        out = axpy(1.0, x, bv([0.0, 0.0]))
        assert np.array_equal(out.blocks[0], x.blocks[0])

    def test_midpoint_form(self):
        rng = SeededRng(12)
        x = bv(rng.normal((8,)))
        v = bv(rng.normal((8,)))
        w = axpy(-0.5, x - v, x)
        ref = 0.5 * (x.blocks[0] + v.blocks[0])
        assert np.allclose(w.blocks[0], ref, atol=1e-15)

    def test_linearity(self):
        rng = SeededRng(4)
        x, y = bv(rng.normal((6,))), bv(rng.normal((6,)))
        a, b = 0.7, -1.3
        lhs = axpy(a + b, x, y)
        rhs = axpy(a, x, axpy(b, x, y))
        assert np.allclose(lhs.blocks[0], rhs.blocks[0], atol=1e-14)


class TestGaussianNoise:
    def test_sigma_zero(self):
        z = gaussian_noise(SeededRng(1), (7,), 0.0)
        assert np.all(z == 0.0)

    def test_negative_sigma(self):
        with pytest.raises(DomainError):
            gaussian_noise(SeededRng(1), (7,), -0.1)

    def test_large_sample_moments(self):
        z = gaussian_noise(SeededRng(42), (10**5,), 1.0)
        assert abs(float(np.mean(z))) < 0.02
        assert abs(float(np.std(z)) - 1.0) < 0.02

    def test_same_seed_identical(self):
        a = gaussian_noise(SeededRng(8), (64,), 0.3)
        b = gaussian_noise(SeededRng(8), (64,), 0.3)
        assert np.array_equal(a, b)


class TestSeededRng:
    def test_substreams_differ(self):
        rng = SeededRng(5)
        a = rng.substream("one").normal((16,))
        b = rng.substream("two").normal((16,))
        assert not np.array_equal(a, b)

    def test_substream_reproducible(self):
        a = SeededRng(5).substream("x").normal((16,))
        b = SeededRng(5).substream("x").normal((16,))
        assert np.array_equal(a, b)

    def test_permutation_is_permutation(self):
        p = SeededRng(2).permutation(50)
        assert sorted(p.tolist()) == list(range(50))


class TestBlockVector:
    def test_structure_checks(self):
        x = bv([1.0, 2.0], [3.0])
        y = bv([0.0, 1.0], [1.0])
        assert x.same_structure(y)
        assert not x.same_structure(bv([1.0, 2.0]))

    def test_add_sub_scale(self):
        x = bv([1.0, 2.0])
        y = bv([10.0, 20.0])
        assert np.array_equal((x + y).blocks[0], [11.0, 22.0])
        assert np.array_equal((y - x).blocks[0], [9.0, 18.0])
        assert np.array_equal(x.scale(3.0).blocks[0], [3.0, 6.0])

    def test_with_block_immutability(self):
        x = bv([1.0], [2.0])
        y = x.with_block(1, np.array([9.0]))
        assert x.blocks[1][0] == 2.0 and y.blocks[1][0] == 9.0

    def test_norm(self):
        x = bv([3.0], [4.0])
        assert x.norm() == 5.0
