import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ureval.metrics import (
    LabelRangeError,
    MetricKind,
    NormalizationError,
    RasterPair,
    ShapeMismatch,
    UndefinedCorrelation,
    average_ranks,
    brier,
    ccrc,
    confidence_estimate,
    correctness_detail,
    correctness_score,
    ece_binned,
    ece_per_sample,
    nll,
)
from ureval.records import EvaluationRecord, InputError, from_arrays


def recs(scores, conf):
    return from_arrays(scores, conf)


def binary_pair(pred, gt):
    pred = np.asarray(pred, dtype=float)
    return RasterPair(np.where(pred > 0, 0.9, 0.1), np.asarray(gt))


# -- correctness -------------------------------------------------------------

def test_dice_identity_and_disjoint():
    gt = np.array([[1, 1, 0], [0, 1, 0]])
    assert correctness_score(binary_pair(gt, gt)) == 1.0
    assert correctness_score(binary_pair(1 - gt, gt)) == 0.0


def test_dice_hand_example():
    pred = np.zeros((3, 4), int)
    gt = np.zeros((3, 4), int)
    pred.flat[[0, 1, 2, 3]] = 1
    gt.flat[[1, 2, 3, 4, 5, 6]] = 1
    assert correctness_score(binary_pair(pred, gt), MetricKind.DICE) == pytest.approx(0.6, abs=1e-15)
    assert correctness_score(binary_pair(pred, gt), MetricKind.F1) == correctness_score(
        binary_pair(pred, gt), MetricKind.DICE)


def test_empty_masks_score_one_and_flag():
    pair = RasterPair(np.full((2, 2), 0.1), np.zeros((2, 2), int))
    detail = correctness_detail(pair)
    assert detail.score == 1.0 and detail.empty


def test_pixel_accuracy():
    prob = np.array([[[0.2, 0.7, 0.1], [0.6, 0.3, 0.1]]])
    mask = np.array([[1, 2]])
    assert correctness_score(RasterPair(prob, mask), MetricKind.PIXEL_ACCURACY) == 0.5


def test_multiclass_dice_macro_over_present_classes():
    prob = np.zeros((1, 4, 3))
    prob[0, :, :] = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]
    mask = np.array([[0, 1, 2, 2]])
    # class 1: TP=1 FP=1 -> 2/3; class 2: TP=1 FN=1 -> 2/3
    assert correctness_score(RasterPair(prob, mask)) == pytest.approx(2 / 3)


def test_threshold_must_be_open_interval():
    with pytest.raises(InputError):
        correctness_score(binary_pair([[1]], [[1]]), threshold=1.0)


def test_metric_kind_parse():
    assert MetricKind.parse("Dice") is MetricKind.DICE
    assert MetricKind.parse("pixel_accuracy") is MetricKind.PIXEL_ACCURACY
    with pytest.raises(InputError, match="valid"):
        MetricKind.parse("iou")


# -- raster validation ---------------------------------------------------------

def test_raster_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        RasterPair(np.zeros((2, 2)), np.zeros((3, 3), int))


def test_raster_normalization_names_pixel():
    prob = np.full((2, 2, 3), 1 / 3)
    prob[1, 0] = [0.4, 0.4, 0.4]
    with pytest.raises(NormalizationError, match=r"\(1, 0\)"):
        RasterPair(prob, np.zeros((2, 2), int))


def test_raster_label_range():
    with pytest.raises(LabelRangeError):
        RasterPair(np.full((1, 2, 2), 0.5), np.array([[0, 2]]))


# -- confidence ------------------------------------------------------------------

def test_confidence_examples():
    assert confidence_estimate(RasterPair(np.ones((3, 3)), np.ones((3, 3), int))) == 1.0
    two = RasterPair(np.array([[0.9, 0.3]]), np.array([[1, 0]]))
    assert confidence_estimate(two) == pytest.approx(0.8, abs=1e-15)
    single = RasterPair(np.array([[[0.55, 0.45]]]), np.array([[0]]))
    assert confidence_estimate(single) == 0.55


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pixel_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    prob = r.dirichlet([1, 1], size=(4, 5))
    mask = r.integers(0, 2, size=(4, 5))
    perm = r.permutation(20)
    shuffled = RasterPair(prob.reshape(20, 2)[perm].reshape(4, 5, 2), mask.ravel()[perm].reshape(4, 5))
    orig = RasterPair(prob, mask)
    assert correctness_score(orig) == correctness_score(shuffled)
    assert confidence_estimate(orig) == confidence_estimate(shuffled)


# -- ccrc ------------------------------------------------------------------------

def test_ccrc_perfect_agreement_and_reversal():
    s = [0.1, 0.4, 0.5, 0.9]
    assert ccrc(recs(s, [0.2, 0.3, 0.8, 0.95])) == 1.0
    assert ccrc(recs(s, [0.95, 0.8, 0.3, 0.2])) == -1.0


def test_ccrc_tied_hand_example():
    r = recs([0.5, 0.8, 0.8, 0.9], [0.2, 0.4, 0.6, 0.3])
    assert ccrc(r) == pytest.approx(1.5 / math.sqrt(22.5), abs=1e-12)
    assert ccrc(r) == pytest.approx(0.3162, abs=1e-4)


def test_average_ranks():
    assert average_ranks(np.array([0.5, 0.8, 0.8, 0.9])).tolist() == [1, 2.5, 2.5, 4]
    assert average_ranks(np.array([3.0, 3.0, 3.0])).tolist() == [2, 2, 2]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=40))
def test_ccrc_matches_scipy(pairs):
    s, c = np.array(pairs).T
    if len(np.unique(s)) < 2 or len(np.unique(c)) < 2:
        with pytest.raises(UndefinedCorrelation):
            ccrc(recs(s, c))
        return
    assert ccrc(recs(s, c)) == pytest.approx(stats.spearmanr(s, c).statistic, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ccrc_monotone_transform_invariance(seed):
    r = np.random.default_rng(seed)
    s, c = r.uniform(0.05, 0.95, 30), r.uniform(0.05, 0.95, 30)
    base = ccrc(recs(s, c))
    assert ccrc(recs(s**3, np.sqrt(c))) == pytest.approx(base, abs=1e-12)


def test_ccrc_undefined():
    with pytest.raises(UndefinedCorrelation):
        ccrc(recs([0.5], [0.5]))
    with pytest.raises(UndefinedCorrelation):
        ccrc(recs([0.5, 0.5, 0.5], [0.1, 0.2, 0.3]))


# -- ece -------------------------------------------------------------------------

def test_ece_per_sample_examples():
    assert ece_per_sample(recs([0.3, 0.7], [0.3, 0.7])) == 0.0
    assert ece_per_sample(recs([0.8, 0.6, 1.0], [0.9, 0.5, 1.0])) == pytest.approx(0.2 / 3, abs=1e-9)
    assert ece_per_sample(recs([0.0], [1.0])) == 1.0
    with pytest.raises(InputError):
        ece_per_sample([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_ece_symmetric_and_bounded(pairs):
    s, c = np.array(pairs).T
    e = ece_per_sample(recs(s, c))
    assert e == ece_per_sample(recs(c, s))
    assert 0.0 <= e <= 1.0


def test_ece_binned_examples():
    r = recs([1.0, 0.0], [0.9, 0.1])
    assert ece_binned(r, 2) == pytest.approx(0.1, abs=1e-9)
    r = recs([0.2, 0.9, 0.4], [0.5, 0.6, 0.1])
    assert ece_binned(r, 1) == pytest.approx(abs(1.5 / 3 - 1.2 / 3), abs=1e-15)
    assert ece_binned(recs([0.5, 0.5], [0.5, 0.5])) == 0.0
    with pytest.raises(InputError):
        ece_binned(r, 0)


def test_ece_binned_one_per_bin_equals_per_sample():
    n = 8
    conf = (np.arange(n) + 0.5) / n
    s = np.random.default_rng(0).uniform(size=n)
    r = recs(s, conf)
    assert ece_binned(r, n) == pytest.approx(ece_per_sample(r), abs=1e-15)


# -- brier / nll -----------------------------------------------------------------

def test_brier_examples():
    onehot = np.zeros((2, 2, 3))
    mask = np.array([[0, 1], [2, 1]])
    onehot[np.arange(2)[:, None], np.arange(2)[None, :], mask] = 1.0
    assert brier([RasterPair(onehot, mask)]) == 0.0
    assert brier([RasterPair(np.array([[0.7]]), np.array([[1]]))]) == pytest.approx(0.09, abs=1e-9)
    for y in (0, 1):
        assert brier([RasterPair(np.array([[0.5]]), np.array([[y]]))]) == 0.25


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 1))
def test_brier_single_channel_is_half_of_two_channel(p, y):
    one = brier([RasterPair(np.array([[p]]), np.array([[y]]))])
    two = brier([RasterPair(np.array([[[1 - p, p]]]), np.array([[y]]))])
    assert two == pytest.approx(2 * one, abs=1e-15)


def test_nll_examples():
    sure = RasterPair(np.array([[1.0, 0.0]]), np.array([[1, 0]]))
    assert nll([sure]).total == 0.0
    pair = RasterPair(np.array([[0.5, 0.25]]), np.array([[1, 1]]))
    res = nll([pair])
    assert res.total == pytest.approx(math.log(2) + math.log(4), abs=1e-9)
    assert res.per_pixel == pytest.approx(res.total / 2, abs=1e-15)
    zero = nll([RasterPair(np.array([[0.0]]), np.array([[1]]))], epsilon=1e-12)
    assert zero.total == pytest.approx(-math.log(1e-12))


def test_nll_rejects_non_pairs():
    with pytest.raises(InputError):
        nll([])


def test_record_range_validation():
    with pytest.raises(InputError):
        EvaluationRecord("x", 1.5, 0.5)
    with pytest.raises(InputError):
        from_arrays([0.1, 0.2], [0.1, 0.2], ids=["a", "a"])
