import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bbattack.errors import DegenerateDirectionError, DegenerateSampleError, ShapeMismatchError
from bbattack.tensor_core import (
    ImageShape,
    clip_to_valid,
    l2_distance,
    project_orthogonal,
    renormalize,
    vec_dot,
    vec_norm,
)

SHAPE = (5, 5, 1)

finite_vectors = arrays(np.float64, SHAPE,
                        elements=st.floats(min_value=-10, max_value=10, allow_nan=False))


class TestImageShape:
    def test_dimensionality(self):
        assert ImageShape(8, 8, 3).k == 192

    def test_rejects_bad_channels(self):
        with pytest.raises(ValueError):
            ImageShape(8, 8, 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ImageShape(0, 8, 1)

    def test_from_array(self):
        assert ImageShape.from_array(np.zeros((4, 6, 3))).dims == (4, 6, 3)


class TestL2Distance:
    def test_identity_is_zero(self):
        a = np.random.default_rng(0).random(SHAPE)
        assert l2_distance(a, a) == 0.0

    def test_zeros_to_ones_k4(self):
        a = np.zeros((2, 2, 1))
        b = np.ones((2, 2, 1))
        assert l2_distance(a, b) == pytest.approx(2.0, abs=0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.random((8, 8, 1))
        b = rng.random((8, 8, 1))
        # brute-force elementwise summation, independent of the implementation
        total = 0.0
        for i in range(8):
            for j in range(8):
                total += (a[i, j, 0] - b[i, j, 0]) ** 2
        assert l2_distance(a, b) == pytest.approx(total ** 0.5, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            l2_distance(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))


class TestProjectOrthogonal:
    def test_orthogonal_input_unchanged(self):
        v = np.zeros(SHAPE)
        v[0, 0, 0] = 1.0
        d = np.zeros(SHAPE)
        d[1, 1, 0] = 2.0
        assert np.abs(project_orthogonal(v, d) - v).max() <= 1e-12

    def test_parallel_input_degenerates(self):
        d = np.random.default_rng(1).standard_normal(SHAPE)
        with pytest.raises(DegenerateSampleError):
            project_orthogonal(3.0 * d, d)

    def test_zero_direction(self):
        with pytest.raises(DegenerateDirectionError):
            project_orthogonal(np.ones(SHAPE), np.zeros(SHAPE))

    def test_random_k100_orthogonality(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal((10, 10, 1))
        d = rng.standard_normal((10, 10, 1))
        r = project_orthogonal(v, d)
        assert abs(vec_dot(r, d)) / (vec_norm(r) * vec_norm(d)) < 1e-10


class TestRenormalize:
    def test_unit_vector_unchanged(self):
        v = np.zeros(SHAPE)
        v[2, 3, 0] = 1.0
        assert np.abs(renormalize(v, 1.0) - v).max() <= 1e-15

    def test_norm_five_to_unit(self):
        v = np.zeros(SHAPE)
        v[0, 1, 0] = 5.0
        assert renormalize(v, 1.0)[0, 1, 0] == pytest.approx(1.0)

    def test_arbitrary_target(self):
        v = np.random.default_rng(3).standard_normal(SHAPE)
        assert vec_norm(renormalize(v, 0.37)) == pytest.approx(0.37, abs=1e-9)

    def test_zero_vector_degenerates(self):
        with pytest.raises(DegenerateSampleError):
            renormalize(np.zeros(SHAPE), 1.0)

    def test_nan_vector_degenerates(self):
        v = np.full(SHAPE, np.nan)
        with pytest.raises(DegenerateSampleError):
            renormalize(v, 1.0)


class TestClip:
    def test_in_range_unchanged(self):
        x = np.random.default_rng(4).random(SHAPE)
        assert np.array_equal(clip_to_valid(x), x)

    def test_clamps(self):
        x = np.array([[[1.5], [-0.2]]])
        out = clip_to_valid(x)
        assert out[0, 0, 0] == 1.0 and out[0, 1, 0] == 0.0

    def test_random_out_of_range(self):
        x = np.random.default_rng(5).standard_normal((6, 6, 1)) * 3
        out = clip_to_valid(x)
        assert out.min() >= 0.0 and out.max() <= 1.0


@seed(1)
@settings(max_examples=200, deadline=None)
@given(v=finite_vectors, d=finite_vectors)
def test_projection_properties(v, d):
    if vec_norm(d) < 1e-6:
        return
    try:
        r = project_orthogonal(v, d)
    except DegenerateSampleError:
        return
    assert abs(vec_dot(r, d)) <= 1e-6 * max(vec_norm(r) * vec_norm(d), 1e-30)
    # idempotence
    assert np.abs(project_orthogonal(r, d) - r).max() <= 1e-10 * max(1.0, vec_norm(v))


@seed(2)
@settings(max_examples=200, deadline=None)
@given(v=finite_vectors)
def test_renormalize_preserves_direction(v):
    if vec_norm(v) < 1e-6:
        return
    r = renormalize(v, 2.5)
    cosine = vec_dot(r, v) / (vec_norm(r) * vec_norm(v))
    assert cosine == pytest.approx(1.0, abs=1e-9)


@seed(3)
@settings(max_examples=200, deadline=None)
@given(a=finite_vectors, b=finite_vectors, c=finite_vectors)
def test_triangle_inequality(a, b, c):
    assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-9
