import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualadv.edges import binarize_edges, broadcast_to_channels, sobel_edge_weights
from dualadv.errors import InvalidThreshold

from oracles import luminance_oracle, sobel_weights_oracle


def test_uniform_image_has_zero_weights():
    edge = sobel_edge_weights(np.full((6, 6, 1), 0.5))
    assert edge.mode == "continuous"
    assert np.all(edge.weights == 0.0)


def test_vertical_step_peaks_on_step_columns():
    img = np.zeros((4, 4, 1))
    img[:, 2:, 0] = 1.0
    w = sobel_edge_weights(img).weights
    assert np.all(w[:, 1:3] == 1.0)
    assert np.all(w[:, 0] < 1.0)
    np.testing.assert_array_equal(w, sobel_weights_oracle(img[:, :, 0]))


def test_matches_convolution_oracle_exactly():
    rng = np.random.default_rng(7)
    img = rng.uniform(0, 1, size=(5, 5, 1))
    w = sobel_edge_weights(img).weights
    np.testing.assert_array_equal(w, sobel_weights_oracle(img[:, :, 0]))


def test_rgb_reduces_to_luminance_first():
    rng = np.random.default_rng(8)
    img = rng.uniform(0, 1, size=(6, 7, 3))
    w = sobel_edge_weights(img).weights
    np.testing.assert_array_equal(w, sobel_weights_oracle(luminance_oracle(img)))


def test_constant_shift_invariance():
    rng = np.random.default_rng(9)
    img = rng.uniform(0.1, 0.6, size=(8, 8, 1))
    base = sobel_edge_weights(img).weights
    shifted = sobel_edge_weights(np.clip(img + 0.2, 0, 1)).weights
    oracle = sobel_weights_oracle(np.clip(img + 0.2, 0, 1)[:, :, 0])
    np.testing.assert_array_equal(shifted, oracle)
    np.testing.assert_allclose(base, shifted, atol=1e-12)


def test_contrast_scaling_invariance():
    rng = np.random.default_rng(10)
    img = rng.uniform(0, 0.4, size=(8, 8, 1))
    base = sobel_edge_weights(img).weights
    scaled = sobel_edge_weights(img * 2.0).weights
    np.testing.assert_allclose(base, scaled, atol=1e-6)


def test_binarize_rule_boundary_inclusive_on_zero_side():
    edge = sobel_edge_weights(np.zeros((3, 3, 1)))
    edge.weights = np.array([[0.05, 0.1, 0.11]])
    binary = binarize_edges(edge, 0.1)
    np.testing.assert_array_equal(binary.weights, [[0.0, 0.0, 1.0]])
    assert binary.mode == "binary" and binary.delta == 0.1


def test_binarize_all_below_threshold():
    edge = sobel_edge_weights(np.zeros((3, 3, 1)))
    edge.weights = np.full((3, 3), 0.1)
    assert np.all(binarize_edges(edge, 0.1).weights == 0.0)


def test_binarize_at_zero_marks_strict_positives():
    rng = np.random.default_rng(11)
    edge = sobel_edge_weights(rng.uniform(0, 1, size=(6, 6, 1)))
    binary = binarize_edges(edge, 0.0)
    np.testing.assert_array_equal(binary.weights, (edge.weights > 0).astype(float))


def test_binarize_rejects_bad_threshold():
    edge = sobel_edge_weights(np.zeros((3, 3, 1)))
    with pytest.raises(InvalidThreshold):
        binarize_edges(edge, 1.5)
    with pytest.raises(InvalidThreshold):
        binarize_edges(edge, -0.1)


def test_broadcast_channels():
    edge = sobel_edge_weights(np.zeros((3, 3, 1)))
    edge.weights = np.arange(9.0).reshape(3, 3)
    one = broadcast_to_channels(edge, 1)
    three = broadcast_to_channels(edge, 3)
    assert one.shape == (3, 3, 1)
    assert three.shape == (3, 3, 3)
    for c in range(3):
        np.testing.assert_array_equal(three[:, :, c], edge.weights)


def test_gating_per_channel_equals_per_pixel():
    rng = np.random.default_rng(12)
    img = rng.uniform(0, 1, size=(5, 5, 3))
    edge = sobel_edge_weights(img)
    gated = img * broadcast_to_channels(edge, 3)
    for c in range(3):
        np.testing.assert_array_equal(gated[:, :, c], img[:, :, c] * edge.weights)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=5, max_value=9),
    st.integers(min_value=5, max_value=9),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_oracle_equality_random_sizes(h, w, seed):
    img = np.random.default_rng(seed).uniform(0, 1, size=(h, w, 1))
    np.testing.assert_array_equal(
        sobel_edge_weights(img).weights, sobel_weights_oracle(img[:, :, 0])
    )
