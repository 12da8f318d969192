"""Outlier cleaning applied before archetype extraction.

Local outlier factor with exactly k neighbors: a pixel whose local density
is much lower than that of its neighbors scores well above 1 and gets
removed when its score exceeds the chosen quantile of all scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.exceptions import NotFittedError

from .types import Dataset, FloatArray
from .validation import as_float_matrix, check_finite

logger = logging.getLogger(__name__)

# Reachability floor: groups of exact duplicates would otherwise produce a
# zero reachability sum and an infinite density; flooring marks them inliers
# with score exactly 1.
_REACH_FLOOR = 1e-12


@dataclass(frozen=True)
class LofConfig:
    """neighbors_k nearest neighbors; removal above the score quantile."""

    neighbors_k: int = 10
    quantile: float = 0.95

    def __post_init__(self) -> None:
        if self.neighbors_k < 1:
            raise ValueError("neighbors_k must be >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")


def _pixel_matrix(data) -> FloatArray:
    if isinstance(data, Dataset):
        return data.pixels
    return as_float_matrix(data, "pixels")


def lof_scores(data, config: LofConfig | None = None) -> FloatArray:
    """Local outlier factor score per pixel (Euclidean metric).

    Uses exactly ``neighbors_k`` neighbors, breaking distance ties by pixel
    index. Scores near 1 indicate inliers; larger scores indicate points in
    sparser regions than their neighbors.
    """
    config = config or LofConfig()
    matrix = _pixel_matrix(data)
    check_finite(matrix, "pixels")
    n = matrix.shape[0]
    if n <= config.neighbors_k:
        raise ValueError(f"need more than neighbors_k={config.neighbors_k} "
                         f"pixels, got {n}")
    k = config.neighbors_k

    sq = np.sum(matrix ** 2, axis=1)
    dist_sq = sq[:, None] + sq[None, :] - 2.0 * (matrix @ matrix.T)
    dist = np.sqrt(np.maximum(dist_sq, 0.0))
    np.fill_diagonal(dist, np.inf)

    # Stable argsort ties to the lowest index, making neighbor sets and
    # therefore scores fully deterministic.
    order = np.argsort(dist, axis=1, kind="stable")
    neighbors = order[:, :k]
    rows = np.arange(n)[:, None]
    kdist = dist[rows, neighbors][:, -1]

    reach = np.maximum(np.maximum(kdist[neighbors], dist[rows, neighbors]),
                       _REACH_FLOOR)
    lrd = k / reach.sum(axis=1)
    return lrd[neighbors].mean(axis=1) / lrd


def score_threshold(scores: FloatArray, quantile: float) -> float:
    """Nearest-rank empirical quantile of the scores."""
    ordered = np.sort(scores)
    rank = int(np.ceil(quantile * ordered.size))
    return float(ordered[max(rank - 1, 0)])


def lof_filter(data, config: LofConfig | None = None) -> tuple[Dataset, np.ndarray]:
    """Remove pixels whose score exceeds the configured quantile.

    Returns the cleaned dataset (labels and reference fractions filtered in
    lockstep) and the removed pixel indices. The removal is logged so it is
    never silent.
    """
    config = config or LofConfig()
    dataset = data if isinstance(data, Dataset) else Dataset(_pixel_matrix(data))
    scores = lof_scores(dataset, config)
    threshold = score_threshold(scores, config.quantile)
    removed = np.flatnonzero(scores > threshold)
    kept = np.flatnonzero(scores <= threshold)
    logger.info("outlier filter removed %d of %d pixels (threshold %.6g at "
                "quantile %.3g)", removed.size, dataset.n_pixels, threshold,
                config.quantile)
    return dataset.take(kept), removed


class LofOutlierFilter(BaseEstimator, OutlierMixin):
    """Estimator wrapper for the outlier filter.

    ``fit`` computes ``scores_``, ``threshold_``, and ``inlier_mask_``;
    ``fit_predict`` follows the usual convention of +1 for inliers and -1
    for outliers.
    """

    def __init__(self, neighbors_k: int = 10, quantile: float = 0.95):
        self.neighbors_k = neighbors_k
        self.quantile = quantile

    def fit(self, X, y=None):
        config = LofConfig(self.neighbors_k, self.quantile)
        self.scores_ = lof_scores(X, config)
        self.threshold_ = score_threshold(self.scores_, config.quantile)
        self.inlier_mask_ = self.scores_ <= self.threshold_
        return self

    def fit_predict(self, X, y=None):
        self.fit(X)
        return np.where(self.inlier_mask_, 1, -1)

    def transform(self, X):
        """Rows of X surviving the fitted mask (fit and transform on the
        same data)."""
        if not hasattr(self, "inlier_mask_"):
            raise NotFittedError("LofOutlierFilter must be fitted first")
        matrix = _pixel_matrix(X)
        if matrix.shape[0] != self.inlier_mask_.size:
            raise ValueError("transform input must match the fitted data size")
        return matrix[self.inlier_mask_]
