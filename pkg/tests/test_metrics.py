import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualadv.errors import EmptyInput, ShapeError
from dualadv.metrics import (
    attack_success_rate,
    iou,
    kendall_tau,
    l1_map_distance,
    misclassification_confidence,
    noise_rate,
    ssim,
    timing,
)

from oracles import iou_oracle, kendall_tau_oracle, l1_distance_oracle, ssim_oracle


class FakeResult:
    def __init__(self, success, confidence=0.0, wall_time_s=0.0):
        self.success = success
        self.confidence = confidence
        self.wall_time_s = wall_time_s


# -- success rate / confidence / timing --------------------------------------


def test_asr_all_success():
    assert attack_success_rate([FakeResult(True)] * 4) == 1.0


def test_asr_counting():
    results = [FakeResult(True), FakeResult(True), FakeResult(True), FakeResult(False)]
    assert attack_success_rate(results) == 0.75


def test_asr_empty_raises():
    with pytest.raises(EmptyInput):
        attack_success_rate([])


def test_confidence_single():
    assert misclassification_confidence([FakeResult(True, 0.9)]) == pytest.approx(0.9)


def test_confidence_mean_over_successes_only():
    results = [FakeResult(True, 0.4), FakeResult(True, 0.6), FakeResult(False, 0.99)]
    assert misclassification_confidence(results) == pytest.approx(0.5)


def test_confidence_absent_without_successes():
    assert misclassification_confidence([FakeResult(False, 0.3)]) is None


def test_timing():
    assert timing([FakeResult(True, wall_time_s=2.0)]) == pytest.approx(2.0)
    assert timing([FakeResult(True, wall_time_s=1.0), FakeResult(False, wall_time_s=3.0)]) == 2.0


# -- L1 -----------------------------------------------------------------------


def test_l1_identical_maps():
    m = np.random.default_rng(0).uniform(0, 1, (4, 4))
    assert l1_map_distance(m, m) == 0.0


def test_l1_extremes():
    assert l1_map_distance(np.zeros((3, 3)), np.ones((3, 3))) == 1.0


def test_l1_matches_elementwise_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0, 1, (3, 3)), rng.uniform(0, 1, (3, 3))
    assert l1_map_distance(a, b) == pytest.approx(l1_distance_oracle(a, b), abs=1e-12)


def test_l1_shape_mismatch():
    with pytest.raises(ShapeError):
        l1_map_distance(np.zeros((2, 2)), np.zeros((3, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_l1_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, (4, 4)), rng.uniform(0, 1, (4, 4))
    assert l1_map_distance(a, b) == l1_map_distance(b, a)


# -- IoU ----------------------------------------------------------------------


def test_iou_identical():
    m = np.random.default_rng(2).uniform(0, 1, (5, 5))
    assert iou(m, m, 0.5) == 1.0


def test_iou_disjoint():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    a[0, :2] = 1.0
    b[3, 2:] = 1.0
    assert iou(a, b, 0.5) == 0.0


def test_iou_set_count_oracle():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    a[0, 0] = a[0, 1] = a[1, 0] = a[1, 1] = 1.0  # 4 px
    b[0, 1] = b[1, 0] = b[1, 1] = b[2, 1] = b[2, 2] = b[3, 3] = 1.0  # 6 px, 3 shared
    assert iou(a, b, 0.5) == pytest.approx(3 / 7)
    assert iou(a, b, 0.5) == pytest.approx(iou_oracle(a, b, 0.5))


def test_iou_both_empty_is_one():
    assert iou(np.zeros((3, 3)), np.zeros((3, 3)), 0.5) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_iou_symmetry_and_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, (5, 5)), rng.uniform(0, 1, (5, 5))
    assert iou(a, b, 0.5) == iou(b, a, 0.5)
    assert iou(a, b, 0.5) == pytest.approx(iou_oracle(a, b, 0.5), abs=1e-12)


def test_iou_one_iff_identical_supports():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, (5, 5))
    b = a * 0.7 + 0.5 * (a > 0.5)  # same ordering, different values
    if iou(a, b, 0.5) == 1.0:
        np.testing.assert_array_equal(a > 0.5, b > 0.5)


# -- SSIM / noise rate ---------------------------------------------------------


def test_ssim_self_similarity():
    img = np.random.default_rng(4).uniform(0, 1, (16, 16, 3))
    assert ssim(img, img) == pytest.approx(1.0)
    assert noise_rate(img, img) == pytest.approx(0.0)


def test_ssim_constant_plus_tiny_noise():
    rng = np.random.default_rng(5)
    a = np.full((16, 16, 1), 0.5)
    b = np.clip(a + rng.normal(0, 1e-3, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(1.0, abs=1e-2)


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(6)
    a = rng.uniform(0, 1, (14, 13, 1))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)


def test_ssim_rgb_matches_oracle():
    rng = np.random.default_rng(7)
    a = rng.uniform(0, 1, (12, 12, 3))
    b = rng.uniform(0, 1, (12, 12, 3))
    assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)


def test_ssim_small_image_global_fallback():
    rng = np.random.default_rng(8)
    a, b = rng.uniform(0, 1, (5, 5, 1)), rng.uniform(0, 1, (5, 5, 1))
    value = ssim(a, b)
    assert -1.0 <= value <= 1.0
    assert ssim(a, a) == pytest.approx(1.0)


def test_noise_rate_is_a_rate():
    rng = np.random.default_rng(9)
    a, b = rng.uniform(0, 1, (16, 16, 1)), rng.uniform(0, 1, (16, 16, 1))
    assert 0.0 <= noise_rate(a, b) <= 1.0


# -- Kendall tau ----------------------------------------------------------------


def test_tau_identical_distinct_values():
    m = np.arange(16.0).reshape(4, 4)
    assert kendall_tau(m, m) == pytest.approx(1.0)


def test_tau_reversed():
    m = np.arange(16.0).reshape(4, 4)
    assert kendall_tau(m, m.max() - m) == pytest.approx(-1.0)


def test_tau_pair_counting_case():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert kendall_tau(a, b) == pytest.approx(2 / 3)
    assert kendall_tau(a, b) == pytest.approx(kendall_tau_oracle(a, b))


def test_tau_constant_map_absent():
    assert kendall_tau(np.full((3, 3), 0.5), np.arange(9.0).reshape(3, 3)) is None


def test_tau_monotone_invariance():
    rng = np.random.default_rng(10)
    a, b = rng.uniform(0, 1, (4, 4)), rng.uniform(0, 1, (4, 4))
    base = kendall_tau(a, b)
    assert kendall_tau(a**3 + 2 * a, b) == pytest.approx(base)
    assert kendall_tau(a, np.exp(b)) == pytest.approx(base)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_tau_matches_pair_counting_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, 12), rng.uniform(0, 1, 12)
    assert kendall_tau(a.reshape(3, 4), b.reshape(3, 4)) == pytest.approx(
        kendall_tau_oracle(a, b), abs=1e-9
    )
