"""Cluster feature extraction, normalization and per-feature ranking.

Twenty features describe each bright cluster.  Every feature is a
statistic (count, axis extent, max height, or density) over one data
subset (bright cloud or low-threshold cloud) restricted to one analysis
region (inner/outer box around the centroid), optionally limited to a
single beam.  Empty selections contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .point_cloud import LidarPoint, PointCloud

NUM_FEATURES = 20

SIGMA_GUARD = 1e-5
RADIUS_GUARD = 1e-5


@dataclass(frozen=True)
class RegionConfig:
    """Nested analysis boxes around a cluster centroid.

    The boxes are centered on the centroid in x and y; the vertical cut
    keeps points at or above ``z_min`` (an absolute height, chosen from
    the sensor mounting height so tall objects are kept whole).
    """

    dx_inner: float = 0.5
    dy_inner: float = 0.5
    dx_outer: float = 2.0
    dy_outer: float = 2.0
    z_min: float = -1.18
    lidar_height: float = 1.4

    def __post_init__(self):
        if self.dx_inner > self.dx_outer or self.dy_inner > self.dy_outer:
            raise ValueError("inner region must not exceed the outer region")


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != NUM_FEATURES:
            raise ValueError(f"expected {NUM_FEATURES} features, got {len(self.values)}")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("feature values must be finite")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-feature mean and standard deviation, fit on training data only.

    Normalization divides the centered value by four standard deviations
    plus a small guard, mapping almost all values into [-1, 1].
    """

    mu: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if len(self.mu) != len(self.sigma):
            raise ValueError("mu and sigma must have the same length")
        if any(s < 0 for s in self.sigma):
            raise ValueError("sigma values must be >= 0")

    def transform(self, values: np.ndarray) -> np.ndarray:
        mu = np.asarray(self.mu)
        sigma = np.asarray(self.sigma)
        return (np.asarray(values, dtype=float) - mu) / (4.0 * sigma + SIGMA_GUARD)


def in_inner_region(
    p: LidarPoint, centroid: tuple[float, float, float], cfg: RegionConfig
) -> bool:
    return (
        abs(p.x - centroid[0]) <= cfg.dx_inner / 2.0
        and abs(p.y - centroid[1]) <= cfg.dy_inner / 2.0
        and p.z >= cfg.z_min
    )


def in_outer_region(
    p: LidarPoint, centroid: tuple[float, float, float], cfg: RegionConfig
) -> bool:
    return (
        abs(p.x - centroid[0]) <= cfg.dx_outer / 2.0
        and abs(p.y - centroid[1]) <= cfg.dy_outer / 2.0
        and p.z >= cfg.z_min
    )


class _Selection:
    """Points of one cloud inside one region, with per-beam sub-selection."""

    def __init__(self, cloud: PointCloud, mask: np.ndarray):
        self.x = cloud.x[mask]
        self.y = cloud.y[mask]
        self.z = cloud.z[mask]
        self.beam = cloud.beam[mask]

    def on_beam(self, beam: int) -> "_Selection":
        sub = _Selection.__new__(_Selection)
        keep = self.beam == beam
        sub.x = self.x[keep]
        sub.y = self.y[keep]
        sub.z = self.z[keep]
        sub.beam = self.beam[keep]
        return sub

    @property
    def count(self) -> float:
        return float(self.x.size)

    def extent(self, axis: str) -> float:
        v = getattr(self, axis)
        if v.size == 0:
            return 0.0
        return float(v.max() - v.min())

    def max_xy_extent(self) -> float:
        return max(self.extent("x"), self.extent("y"))

    def max_z_above(self, height: float) -> float:
        if self.z.size == 0:
            return 0.0
        return float(self.z.max() - height)

    def density(self, cx: float, cy: float) -> float:
        if self.x.size == 0:
            return 0.0
        radius = float(np.sqrt((self.x - cx) ** 2 + (self.y - cy) ** 2).max())
        return self.x.size / (radius + RADIUS_GUARD)


def _region_mask(
    cloud: PointCloud, centroid: tuple[float, float, float], dx: float, dy: float, z_min: float
) -> np.ndarray:
    return (
        (np.abs(cloud.x - centroid[0]) <= dx / 2.0)
        & (np.abs(cloud.y - centroid[1]) <= dy / 2.0)
        & (cloud.z >= z_min)
    )


def extract_features(
    bright: PointCloud,
    low: PointCloud,
    centroid: tuple[float, float, float],
    cfg: RegionConfig,
) -> FeatureVector:
    """Compute the 20-feature descriptor for one cluster centroid."""
    ht, lt = bright, low
    cx, cy = centroid[0], centroid[1]

    ht_inner = _Selection(ht, _region_mask(ht, centroid, cfg.dx_inner, cfg.dy_inner, cfg.z_min))
    ht_outer = _Selection(ht, _region_mask(ht, centroid, cfg.dx_outer, cfg.dy_outer, cfg.z_min))
    lt_inner = _Selection(lt, _region_mask(lt, centroid, cfg.dx_inner, cfg.dy_inner, cfg.z_min))
    lt_outer = _Selection(lt, _region_mask(lt, centroid, cfg.dx_outer, cfg.dy_outer, cfg.z_min))

    values = (
        ht_inner.extent("z"),                       # 1: bright inner, height extent
        lt_outer.on_beam(7).max_xy_extent(),        # 2: low outer, beam 7, widest footprint
        lt_outer.on_beam(5).max_xy_extent(),        # 3: low outer, beam 5, widest footprint
        ht_outer.max_z_above(cfg.lidar_height),     # 4: bright outer, top height above sensor
        lt_outer.extent("z"),                       # 5: low outer, height extent
        lt_inner.on_beam(7).count,                  # 6: low inner, beam 7, point count
        lt_inner.on_beam(6).max_xy_extent(),        # 7: low inner, beam 6, widest footprint
        lt_outer.on_beam(5).count,                  # 8: low outer, beam 5, point count
        lt_inner.extent("x"),                       # 9: low inner, depth extent
        lt_inner.on_beam(4).count,                  # 10: low inner, beam 4, point count
        lt_inner.on_beam(5).count,                  # 11: low inner, beam 5, point count
        lt_outer.on_beam(6).count,                  # 12: low outer, beam 6, point count
        ht_inner.on_beam(6).count,                  # 13: bright inner, beam 6, point count
        lt_inner.on_beam(5).max_xy_extent(),        # 14: low inner, beam 5, widest footprint
        lt_outer.on_beam(5).density(cx, cy),        # 15: low outer, beam 5, count over radius
        lt_inner.extent("x"),                       # 16: low inner, depth extent
        ht_inner.on_beam(7).count,                  # 17: bright inner, beam 7, point count
        lt_inner.count,                             # 18: low inner, point count
        lt_outer.count,                             # 19: low outer, point count
        lt_outer.extent("y"),                       # 20: low outer, width extent
    )
    return FeatureVector(values=values)


def stack_features(features: Sequence[FeatureVector]) -> np.ndarray:
    return np.stack([f.as_array() for f in features]) if features else np.empty((0, NUM_FEATURES))


def fit_normalizer(training: Sequence[FeatureVector] | np.ndarray) -> FeatureNormalizer:
    """Fit per-feature mean and population standard deviation."""
    matrix = training if isinstance(training, np.ndarray) else stack_features(list(training))
    if matrix.shape[0] < 2:
        raise ValueError(f"need at least 2 training vectors, got {matrix.shape[0]}")
    mu = matrix.mean(axis=0)
    sigma = matrix.std(axis=0)
    return FeatureNormalizer(mu=tuple(float(v) for v in mu), sigma=tuple(float(v) for v in sigma))


def normalize(f: FeatureVector, normalizer: FeatureNormalizer) -> FeatureVector:
    return FeatureVector(values=tuple(float(v) for v in normalizer.transform(f.as_array())))


def feature_score(tp: int, tn: int, fp: int, fn: int) -> float:
    """Balanced 0..1000 score: 500 * TPR + 500 * TNR."""
    if tp + fn <= 0:
        raise ValueError("score undefined without positive examples (TP + FN = 0)")
    if tn + fp <= 0:
        raise ValueError("score undefined without negative examples (TN + FP = 0)")
    return 500.0 * tp / (tp + fn) + 500.0 * tn / (tn + fp)


def best_threshold_score(values: np.ndarray, is_positive: np.ndarray) -> tuple[float, float, int]:
    """Best achievable score of a one-feature threshold rule.

    Sweeps every midpoint between adjacent distinct values plus both
    all-one-class extremes, in both orientations (positive when the value
    is at most / at least the threshold).  Returns (score, threshold,
    orientation) with orientation +1 meaning "positive iff value >=
    threshold" and -1 the reverse.
    """
    values = np.asarray(values, dtype=float)
    is_positive = np.asarray(is_positive, dtype=bool)
    n_pos = int(is_positive.sum())
    n_neg = int(values.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes are required for a threshold sweep")
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sp = is_positive[order]
    # Positives at or below index i (inclusive prefix counts).
    pos_prefix = np.cumsum(sp)
    distinct = np.nonzero(np.diff(sv) > 0)[0]
    # Candidate split: everything at index <= i is on the low side.
    candidate_idx = np.concatenate([distinct, [sv.size - 1]])
    thresholds = np.concatenate([(sv[distinct] + sv[distinct + 1]) / 2.0, [sv[-1] + 1.0]])
    best = (-1.0, 0.0, 1)
    for i, thr in zip(candidate_idx, thresholds):
        pos_low = int(pos_prefix[i])
        neg_low = int(i + 1 - pos_low)
        # orientation -1: positive iff value <= threshold
        tp, fn = pos_low, n_pos - pos_low
        tn, fp = n_neg - neg_low, neg_low
        score = 500.0 * tp / n_pos + 500.0 * tn / n_neg
        if score > best[0]:
            best = (score, float(thr), -1)
        # orientation +1: positive iff value >= threshold
        tp, fn = n_pos - pos_low, pos_low
        tn, fp = neg_low, n_neg - neg_low
        score = 500.0 * tp / n_pos + 500.0 * tn / n_neg
        if score > best[0]:
            best = (score, float(thr), 1)
    return best


def rank_features(
    features: Sequence[FeatureVector] | np.ndarray, is_beacon: Sequence[bool]
) -> list[tuple[int, float]]:
    """Order features by the score of their best one-feature threshold rule.

    Returns (feature_index, score) pairs, highest score first; ties keep
    the lower feature index first.
    """
    matrix = features if isinstance(features, np.ndarray) else stack_features(list(features))
    labels = np.asarray(is_beacon, dtype=bool)
    scored = []
    for k in range(matrix.shape[1]):
        score, _, _ = best_threshold_score(matrix[:, k], labels)
        scored.append((k, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def cumulative_score_curve(
    train_features: Sequence[FeatureVector] | np.ndarray,
    train_is_beacon: Sequence[bool],
    test_features: Sequence[FeatureVector] | np.ndarray | None = None,
    test_is_beacon: Sequence[bool] | None = None,
    ranking: list[tuple[int, float]] | None = None,
    regularization: float = 1.0,
) -> list[tuple[int, float, float]]:
    """Score of a classifier trained on the top-k ranked features, k = 1..N.

    Returns (k, train_score, test_score) rows; the test score repeats the
    train score when no test split is given.
    """
    from .classifier import svm_confusion, train_svm

    train_matrix = (
        train_features
        if isinstance(train_features, np.ndarray)
        else stack_features(list(train_features))
    )
    train_labels = np.asarray(train_is_beacon, dtype=bool)
    if test_features is not None:
        test_matrix = (
            test_features
            if isinstance(test_features, np.ndarray)
            else stack_features(list(test_features))
        )
        test_labels = np.asarray(test_is_beacon, dtype=bool)
    else:
        test_matrix, test_labels = None, None
    if ranking is None:
        ranking = rank_features(train_matrix, train_labels)
    order = [idx for idx, _ in ranking]
    curve = []
    for k in range(1, len(order) + 1):
        cols = order[:k]
        model = train_svm(train_matrix[:, cols], train_labels, regularization=regularization)
        tp, tn, fp, fn = svm_confusion(model, train_matrix[:, cols], train_labels)
        train_score = feature_score(tp, tn, fp, fn)
        if test_matrix is not None:
            tp, tn, fp, fn = svm_confusion(model, test_matrix[:, cols], test_labels)
            test_score = feature_score(tp, tn, fp, fn)
        else:
            test_score = train_score
        curve.append((k, train_score, test_score))
    return curve
