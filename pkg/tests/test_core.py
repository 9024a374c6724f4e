import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dualadv.core import (
    ClassifierHandle,
    Image,
    NormBallSpec,
    classify,
    cross_entropy_spec,
    input_gradient,
    project_linf,
)
from dualadv.errors import InputShapeError
from dualadv.models import LinearModel, TinyMLP, make_handle

from oracles import finite_difference_gradient


class ConstantModel(torch.nn.Module):
    """Always emits the same logits regardless of input."""

    def __init__(self, num_classes=3):
        super().__init__()
        self.register_buffer("logits", torch.zeros(num_classes))
        self.logits[0] = 10.0

    def forward(self, x):
        return self.logits.expand(x.shape[0], -1)


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.full((4, 4, 3), 1.5))
    with pytest.raises(InputShapeError):
        Image(np.zeros((4, 4, 2)))
    im = Image(np.zeros((4, 4)))  # grayscale gets a channel axis
    assert im.shape == (4, 4, 1)


def test_classify_constant_model():
    handle = ClassifierHandle(ConstantModel(), num_classes=3)
    label, probs = classify(handle, Image(np.random.default_rng(0).uniform(0, 1, (4, 4, 3))))
    assert label == 0
    assert probs[0] > 0.99
    assert probs.sum() == pytest.approx(1.0, abs=1e-5)


def test_classify_linear_model_bright_image():
    # one weight row all +1, the other all −1: bright image → class 0
    w = np.stack([np.ones(4), -np.ones(4)])
    handle = make_handle(LinearModel((2, 2, 1), 2, weights=w), 2, (2, 2, 1))
    label, probs = handle.classify(Image(np.full((2, 2, 1), 0.9)))
    assert label == 0
    # hand-evaluated softmax: z = (+3.6, −3.6)
    z = 0.9 * 4
    expected = np.exp(z) / (np.exp(z) + np.exp(-z))
    assert probs[0] == pytest.approx(expected, rel=1e-5)


def test_classify_probs_sum_to_one():
    handle = make_handle(TinyMLP((4, 4, 1), (8,), 5), 5, (4, 4, 1))
    _, probs = handle.classify(Image(np.random.default_rng(1).uniform(0, 1, (4, 4, 1))))
    assert probs.sum() == pytest.approx(1.0, abs=1e-5)
    assert len(probs) == 5


def test_classify_permutation_equivariant():
    torch.manual_seed(0)
    model = TinyMLP((3, 3, 1), (6,), 4)
    handle = make_handle(model, 4, (3, 3, 1))
    x = Image(np.random.default_rng(2).uniform(0, 1, (3, 3, 1)))
    _, probs = handle.classify(x)

    perm = [2, 0, 3, 1]
    head = model.net[-1]
    with torch.no_grad():
        head.weight.copy_(head.weight[perm])
        head.bias.copy_(head.bias[perm])
    _, permuted = handle.classify(x)
    np.testing.assert_allclose(permuted, probs[perm], rtol=1e-6)


def test_classify_shape_mismatch():
    handle = make_handle(TinyMLP((4, 4, 1), (8,), 3), 3, (4, 4, 1))
    with pytest.raises(InputShapeError):
        handle.classify(Image(np.zeros((5, 5, 1))))


# -- input_gradient -------------------------------------------------------------


def test_gradient_of_constant_loss_is_zero():
    handle = make_handle(TinyMLP((4, 4, 1), (8,), 3), 3, (4, 4, 1))
    x = Image(np.random.default_rng(3).uniform(0, 1, (4, 4, 1)))
    g = input_gradient(handle, x, lambda probs, xt: torch.ones(()))
    assert np.all(g == 0.0)


def test_gradient_of_pixel_sum_is_ones():
    handle = make_handle(TinyMLP((4, 4, 1), (8,), 3), 3, (4, 4, 1))
    x = Image(np.random.default_rng(4).uniform(0, 1, (4, 4, 1)))
    g = input_gradient(handle, x, lambda probs, xt: xt.sum())
    np.testing.assert_allclose(g, np.ones((4, 4, 1)), rtol=1e-6)


def test_gradient_matches_finite_differences_linear_model():
    rng = np.random.default_rng(5)
    w = rng.normal(0, 1, (3, 4))
    handle = make_handle(
        LinearModel((2, 2, 1), 3, weights=w), 3, (2, 2, 1), dtype=torch.float64
    )
    x = rng.uniform(0.2, 0.8, (2, 2, 1))
    g = input_gradient(handle, Image(x), cross_entropy_spec(1))

    def loss_at(arr):
        probs = handle.forward_probs(handle.to_batch([arr.astype(np.float32)]))
        return float(-np.log(probs[0, 1].item()))

    fd = finite_difference_gradient(loss_at, x, h=1e-3)
    np.testing.assert_allclose(g, fd, rtol=1e-3, atol=1e-6)


def test_gradient_matches_finite_differences_mlp():
    torch.manual_seed(6)
    handle = make_handle(
        TinyMLP((3, 3, 1), (10,), 4), 4, (3, 3, 1), dtype=torch.float64
    )
    x = np.random.default_rng(7).uniform(0.2, 0.8, (3, 3, 1))
    g = input_gradient(handle, Image(x), cross_entropy_spec(2))

    def loss_at(arr):
        probs = handle.forward_probs(handle.to_batch([arr]))
        return float(-np.log(probs[0, 2].item()))

    fd = finite_difference_gradient(loss_at, x, h=1e-3)
    denom = np.maximum(np.abs(fd), 1e-4)
    assert np.max(np.abs(g - fd) / denom) < 1e-3


# -- project_linf ----------------------------------------------------------------


def test_project_identity_inside_ball():
    center = Image(np.full((3, 3, 1), 0.5))
    ball = NormBallSpec(epsilon=0.031, center=center)
    np.testing.assert_array_equal(project_linf(center.pixels, ball), center.pixels)


def test_project_clamp_oracle():
    center = Image(np.full((1, 1, 1), 0.5))
    ball = NormBallSpec(epsilon=0.031, center=center)
    out = project_linf(np.full((1, 1, 1), 0.9), ball)
    assert out[0, 0, 0] == pytest.approx(0.531)


def test_project_range_clip_dominates():
    center = Image(np.full((1, 1, 1), 0.99))
    ball = NormBallSpec(epsilon=0.031, center=center)
    out = project_linf(np.full((1, 1, 1), 1.5), ball)
    assert out[0, 0, 0] == 1.0


def test_project_shape_mismatch():
    ball = NormBallSpec(epsilon=0.1, center=Image(np.zeros((2, 2, 1))))
    with pytest.raises(InputShapeError):
        project_linf(np.zeros((3, 3, 1)), ball)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.floats(min_value=0.0, max_value=0.5))
def test_project_idempotent_and_feasible(seed, eps):
    rng = np.random.default_rng(seed)
    center = Image(rng.uniform(0, 1, (4, 4, 1)))
    ball = NormBallSpec(epsilon=eps, center=center)
    z = rng.uniform(-0.5, 1.5, (4, 4, 1))
    once = project_linf(z, ball)
    np.testing.assert_array_equal(project_linf(once, ball), once)
    assert np.max(np.abs(once - center.pixels.astype(np.float64))) <= eps + 1e-12
    assert once.min() >= 0.0 and once.max() <= 1.0
