import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dynres.resample import as_grid, cross_downsample, cross_upsample, downsample, upsample

from oracles import upsample_matrix


def grids(max_side=8):
    side = st.integers(1, max_side)
    return st.tuples(side, side, st.integers(1, 3)).flatmap(
        lambda shape: arrays(np.float64, shape, elements=st.floats(-1e3, 1e3)))


class TestUpsample:
    def test_single_pixel(self):
        out = upsample(np.array([[[4.0]]]), 2)
        np.testing.assert_array_equal(out, np.full((2, 2, 1), 2.0))

    def test_factor_one_identity(self):
        x = np.random.default_rng(0).standard_normal((4, 4, 3))
        np.testing.assert_array_equal(upsample(x, 1), x)

    def test_norm_preserved(self):
        x = np.random.default_rng(1).standard_normal((8, 8, 3))
        np.testing.assert_allclose(np.linalg.norm(upsample(x, 2)), np.linalg.norm(x), rtol=1e-12)

    def test_matches_dense_matrix(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 2, 2))
        U = upsample_matrix(3, 2, 2, 2)
        np.testing.assert_allclose(upsample(x, 2).ravel(), U @ x.ravel(), atol=1e-15)
        np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-15)

    def test_rejects_bad_factor(self):
        with pytest.raises(ValueError):
            upsample(np.zeros((2, 2, 1)), 0)

    def test_rejects_non_grid(self):
        with pytest.raises(ValueError):
            as_grid(np.zeros((2, 2)))


class TestDownsample:
    def test_inverts_single_pixel(self):
        np.testing.assert_array_equal(downsample(np.full((2, 2, 1), 2.0), 2), [[[4.0]]])

    def test_left_inverse(self):
        x = np.random.default_rng(3).standard_normal((5, 7, 3))
        np.testing.assert_allclose(downsample(upsample(x, 2), 2), x, atol=1e-12)

    def test_adjoint(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            x = rng.standard_normal((4, 4, 3))
            y = rng.standard_normal((8, 8, 3))
            np.testing.assert_allclose(np.sum(upsample(x, 2) * y), np.sum(x * downsample(y, 2)), atol=1e-12)

    def test_indivisible(self):
        with pytest.raises(ValueError):
            downsample(np.zeros((5, 4, 1)), 2)


class TestCrossUpsample:
    def test_equal_dims_identity(self):
        x = np.random.default_rng(5).standard_normal((8, 8, 3))
        np.testing.assert_array_equal(cross_upsample(x, (8, 8, 3), (8, 8, 3)), x)

    def test_single_stage(self):
        x = np.random.default_rng(6).standard_normal((8, 8, 3))
        np.testing.assert_array_equal(cross_upsample(x, (8, 8, 3), (16, 16, 3)), upsample(x, 2))

    def test_two_stages(self):
        x = np.random.default_rng(7).standard_normal((8, 8, 3))
        np.testing.assert_allclose(cross_upsample(x, (8, 8, 3), (32, 32, 3)),
                                   upsample(upsample(x, 2), 2), atol=1e-12)

    def test_non_integer_factor(self):
        with pytest.raises(ValueError):
            cross_upsample(np.zeros((3, 3, 1)), (3, 3, 1), (8, 8, 1))

    def test_cross_downsample_is_adjoint(self):
        rng = np.random.default_rng(8)
        x, y = rng.standard_normal((4, 4, 2)), rng.standard_normal((16, 16, 2))
        lhs = np.sum(cross_upsample(x, (4, 4, 2), (16, 16, 2)) * y)
        rhs = np.sum(x * cross_downsample(y, (16, 16, 2), (4, 4, 2)))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(x=grids(), f=st.sampled_from([1, 2, 4]))
    def test_orthonormal(self, x, f):
        up = upsample(x, f)
        np.testing.assert_allclose(downsample(up, f), x, atol=1e-12 * max(1.0, np.abs(x).max()))
        np.testing.assert_allclose(np.linalg.norm(up), np.linalg.norm(x),
                                   rtol=1e-12, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), a=st.floats(-10, 10), b=st.floats(-10, 10))
    def test_linear(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((3, 4, 2)), rng.standard_normal((3, 4, 2))
        np.testing.assert_allclose(upsample(a * x + b * y, 2), a * upsample(x, 2) + b * upsample(y, 2),
                                   atol=1e-12 * (1 + abs(a) + abs(b)))
