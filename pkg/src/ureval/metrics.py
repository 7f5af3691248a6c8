"""Correctness, confidence and reliability metrics.

All reductions over pixels use ``math.fsum`` so results are exactly
independent of pixel order and of how a dataset is partitioned for
parallel extraction.

CCRC is reported as the raw Spearman coefficient in [-1, 1]; it is not
clipped or rescaled to [0, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .records import EvaluationRecord, InputError, as_arrays

NORMALIZATION_TOL = 1e-4
DEFAULT_THRESHOLD = 0.5
DEFAULT_BINS = 15
DEFAULT_EPSILON = 1e-12


class UndefinedCorrelation(InputError):
    """Spearman correlation is undefined (n < 2 or a constant list)."""


class ShapeMismatch(InputError):
    pass


class NormalizationError(InputError):
    pass


class LabelRangeError(InputError):
    pass


class MetricKind(enum.Enum):
    F1 = "f1"
    DICE = "dice"
    PIXEL_ACCURACY = "pixel-accuracy"

    @classmethod
    def parse(cls, name: str) -> "MetricKind":
        key = name.strip().lower().replace("_", "-")
        aliases = {"f1": cls.F1, "dice": cls.DICE, "pixel-accuracy": cls.PIXEL_ACCURACY,
                   "pixelaccuracy": cls.PIXEL_ACCURACY, "accuracy": cls.PIXEL_ACCURACY}
        try:
            return aliases[key]
        except KeyError:
            valid = ", ".join(m.value for m in cls)
            raise InputError(f"unknown metric {name!r}; valid: {valid}") from None


@dataclass(frozen=True, eq=False)
class RasterPair:
    """A probability map (H, W, C) and its integer ground-truth mask (H, W).

    For ``C == 1`` the map holds the foreground probability and the mask is
    binary. A 2-D map is accepted and treated as ``C == 1``.
    """

    prob_map: np.ndarray
    gt_mask: np.ndarray

    def __post_init__(self) -> None:
        prob = np.asarray(self.prob_map, dtype=np.float64)
        if prob.ndim == 2:
            prob = prob[:, :, None]
        mask = np.asarray(self.gt_mask)
        if prob.ndim != 3 or prob.shape[2] < 1:
            raise InputError(f"prob_map must be HxW or HxWxC, got shape {np.shape(self.prob_map)}")
        if mask.ndim != 2:
            raise InputError(f"gt_mask must be HxW, got shape {mask.shape}")
        if prob.shape[:2] != mask.shape:
            raise ShapeMismatch(f"shape mismatch: prob_map {prob.shape[:2]} vs gt_mask {mask.shape}")
        if not np.all(np.isfinite(prob)) or prob.min(initial=0.0) < 0.0 or prob.max(initial=0.0) > 1.0:
            raise NormalizationError("prob_map values must lie in [0, 1]")
        if mask.size and not np.issubdtype(mask.dtype, np.integer):
            if not np.all(mask == np.round(mask)):
                raise LabelRangeError("gt_mask must hold integer labels")
        mask = mask.astype(np.int64)
        n_classes = max(prob.shape[2], 2)
        if mask.size and (mask.min() < 0 or mask.max() > n_classes - 1):
            bad = np.argwhere((mask < 0) | (mask > n_classes - 1))[0]
            raise LabelRangeError(
                f"label {mask[tuple(bad)]} at pixel ({bad[0]}, {bad[1]}) outside [0, {n_classes - 1}]"
            )
        if prob.shape[2] >= 2:
            sums = prob.sum(axis=2)
            off = np.abs(sums - 1.0) > NORMALIZATION_TOL
            if off.any():
                r, c = np.argwhere(off)[0]
                raise NormalizationError(
                    f"channel sum {sums[r, c]:.6g} at pixel ({r}, {c}) differs from 1 by more than {NORMALIZATION_TOL}"
                )
        prob.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "prob_map", prob)
        object.__setattr__(self, "gt_mask", mask)

    @property
    def channels(self) -> int:
        return self.prob_map.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.gt_mask.size

    def class_probs(self) -> np.ndarray:
        """Per-pixel class distribution, (H, W, max(C, 2))."""
        if self.channels == 1:
            p = self.prob_map[:, :, 0]
            return np.stack([1.0 - p, p], axis=2)
        return self.prob_map

    def true_class_prob(self) -> np.ndarray:
        probs = self.class_probs()
        return np.take_along_axis(probs, self.gt_mask[:, :, None], axis=2)[:, :, 0]


@dataclass(frozen=True)
class ScoreDetail:
    score: float
    empty: bool  # prediction and ground truth both empty: score defined as 1.0


def _dice_counts(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int]:
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return tp, fp, fn


def correctness_detail(
    pair: RasterPair, metric: MetricKind = MetricKind.F1, threshold: float = DEFAULT_THRESHOLD
) -> ScoreDetail:
    if not 0.0 < threshold < 1.0:
        raise InputError(f"threshold must be in (0, 1), got {threshold}")
    if pair.n_pixels == 0:
        raise InputError("empty raster")
    c = pair.channels
    if metric is MetricKind.PIXEL_ACCURACY:
        if c == 1:
            pred = (pair.prob_map[:, :, 0] > threshold).astype(np.int64)
        else:
            pred = np.argmax(pair.prob_map, axis=2)
        return ScoreDetail(np.count_nonzero(pred == pair.gt_mask) / pair.n_pixels, False)

    if c <= 2:
        pred = pair.prob_map[:, :, c - 1] > threshold
        tp, fp, fn = _dice_counts(pred, pair.gt_mask == 1)
        denom = 2 * tp + fp + fn
        if denom == 0:
            return ScoreDetail(1.0, True)
        return ScoreDetail(2 * tp / denom, False)

    # C >= 3: macro Dice over foreground classes present in prediction or truth
    pred_cls = np.argmax(pair.prob_map, axis=2)
    per_class = []
    for k in range(1, c):
        tp, fp, fn = _dice_counts(pred_cls == k, pair.gt_mask == k)
        if 2 * tp + fp + fn:
            per_class.append(2 * tp / (2 * tp + fp + fn))
    if not per_class:
        return ScoreDetail(1.0, True)
    return ScoreDetail(math.fsum(per_class) / len(per_class), False)


def correctness_score(
    pair: RasterPair, metric: MetricKind = MetricKind.F1, threshold: float = DEFAULT_THRESHOLD
) -> float:
    """Per-sample correctness: F1/Dice = 2TP / (2TP + FP + FN), or pixel accuracy.

    F1 and Dice are the same quantity on binary masks. When prediction and
    ground truth are both empty the score is 1.0 (see ``correctness_detail``
    for the flag).
    """
    return correctness_detail(pair, metric, threshold).score


def confidence_estimate(pair: RasterPair) -> float:
    """Mean over pixels of the maximum class probability."""
    if pair.n_pixels == 0:
        raise InputError("empty raster")
    top = pair.class_probs().max(axis=2)
    return math.fsum(top.ravel().tolist()) / top.size


def overall_score(records: Sequence[EvaluationRecord]) -> float:
    if not records:
        raise InputError("empty record set")
    return math.fsum(r.score for r in records) / len(records)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    for lo, hi in zip(starts, ends):
        ranks[order[lo:hi]] = (lo + 1 + hi) / 2.0
    return ranks


def ccrc(records: Sequence[EvaluationRecord]) -> float:
    """Correctness-confidence rank correlation (Spearman, average ranks for ties)."""
    if len(records) < 2:
        raise UndefinedCorrelation(f"need at least 2 records, got {len(records)}")
    scores, conf = as_arrays(records)
    rs = average_ranks(scores)
    rc = average_ranks(conf)
    ds = rs - rs.mean()
    dc = rc - rc.mean()
    vs = float(np.dot(ds, ds))
    vc = float(np.dot(dc, dc))
    if vs == 0.0 or vc == 0.0:
        which = "scores" if vs == 0.0 else "confidences"
        raise UndefinedCorrelation(f"{which} are constant; rank correlation undefined")
    rho = float(np.dot(ds, dc)) / math.sqrt(vs * vc)
    return max(-1.0, min(1.0, rho))


def ece_per_sample(records: Sequence[EvaluationRecord]) -> float:
    """Mean absolute gap between score and confidence."""
    if not records:
        raise InputError("empty record set")
    return math.fsum(abs(r.score - r.confidence) for r in records) / len(records)


def ece_binned(records: Sequence[EvaluationRecord], bins: int = DEFAULT_BINS) -> float:
    """Occupancy-weighted |mean score - mean confidence| over equal-width bins.

    Bin ``b`` covers ``[b/bins, (b+1)/bins)``; confidence 1.0 falls in the last bin.
    """
    if not records:
        raise InputError("empty record set")
    if not isinstance(bins, (int, np.integer)) or bins < 1:
        raise InputError(f"bins must be a positive integer, got {bins!r}")
    scores, conf = as_arrays(records)
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    n = len(records)
    total = []
    for b in np.unique(idx):
        members = idx == b
        m = int(members.sum())
        gap = abs(math.fsum(scores[members]) / m - math.fsum(conf[members]) / m)
        total.append(m / n * gap)
    return math.fsum(total)


def _check_pairs(pairs: Sequence[RasterPair]) -> None:
    if not pairs:
        raise InputError("no raster pairs")
    for p in pairs:
        if not isinstance(p, RasterPair):
            raise InputError(f"expected RasterPair, got {type(p).__name__}")


def brier(pairs: Sequence[RasterPair]) -> float:
    """Mean per-pixel squared error against the one-hot ground truth.

    Single-channel maps contribute ``(p - y)**2``; multi-channel maps contribute
    the sum over channels, so a C=1 map scores half of its explicit
    two-channel expansion.
    """
    _check_pairs(pairs)
    sums = []
    n = 0
    for pair in pairs:
        if pair.channels == 1:
            err = (pair.prob_map[:, :, 0] - pair.gt_mask) ** 2
        else:
            onehot = np.eye(pair.channels)[pair.gt_mask]
            err = ((pair.prob_map - onehot) ** 2).sum(axis=2)
        sums.append(math.fsum(err.ravel().tolist()))
        n += pair.n_pixels
    if n == 0:
        raise InputError("empty rasters")
    return math.fsum(sums) / n


@dataclass(frozen=True)
class NLL:
    total: float  # nats, summed over every pixel
    per_pixel: float
    n_pixels: int


def nll(pairs: Sequence[RasterPair], epsilon: float = DEFAULT_EPSILON) -> NLL:
    """Negative log-likelihood of the true labels, natural log, probabilities floored at ``epsilon``."""
    _check_pairs(pairs)
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"epsilon must be in (0, 1), got {epsilon}")
    sums = []
    n = 0
    for pair in pairs:
        p = np.maximum(pair.true_class_prob(), epsilon)
        sums.append(math.fsum((-np.log(p)).ravel().tolist()))
        n += pair.n_pixels
    if n == 0:
        raise InputError("empty rasters")
    total = math.fsum(sums)
    return NLL(total, total / n, n)
