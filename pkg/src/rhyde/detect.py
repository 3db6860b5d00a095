"""Anomaly scores, the global RX baseline, and ROC evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovarianceError, DimensionMismatchError, ValidationError
from .noise import EIG_FLOOR


def rhyde_scores(s_hat) -> np.ndarray:
    """Euclidean norm of every column of the recovered outlier matrix."""
    s = np.asarray(s_hat, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError("outlier matrix contains non-finite entries")
    return np.sqrt(np.einsum("ij,ij->j", s, s))


def global_rx(y) -> np.ndarray:
    """Squared Mahalanobis distance of each pixel to the global mean.

    The covariance eigenvalues are floored at ``1e-10 * lambda_max``.
    """
    y = np.asarray(y, dtype=np.float64)
    n_b, n = y.shape
    if n <= n_b:
        raise ValidationError(f"RX needs more pixels ({n}) than bands ({n_b})")
    centered = y - y.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / (n - 1)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    scale = float(np.abs(y).max())
    if w[-1] <= (1e-12 * scale) ** 2:
        raise DegenerateCovarianceError("background covariance is zero: all pixels are identical")
    w = np.maximum(w, EIG_FLOOR * w[-1])
    proj = v.T @ centered
    return np.einsum("ij,ij->j", proj, proj / w[:, None])


@dataclass(frozen=True)
class RocCurve:
    fa_rate: np.ndarray
    det_rate: np.ndarray
    thresholds: np.ndarray
    auc: float
    min_fa_at_full_detection: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fa_rate.tolist(), self.det_rate.tolist()))


def roc_curve(scores, truth) -> RocCurve:
    """ROC from a descending sweep over the distinct score values.

    Pixels with equal scores change class together. ``thresholds[k]`` is the
    score at or above which pixels are declared anomalous at point ``k``
    (``+inf`` for the origin).
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=bool).reshape(-1)
    if s.shape != t.shape:
        raise DimensionMismatchError(f"{s.size} scores for {t.size} labels")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC needs at least one anomalous and one background pixel")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    t_sorted = t[order]
    tp = np.cumsum(t_sorted)
    fp = np.cumsum(~t_sorted)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    det = np.r_[0.0, tp[ends] / n_pos]
    fa = np.r_[0.0, fp[ends] / n_neg]
    thr = np.r_[np.inf, s_sorted[ends]]
    auc = float(np.sum((fa[1:] - fa[:-1]) * (det[1:] + det[:-1]) / 2.0))
    min_fa = float(fa[det >= 1.0].min())
    return RocCurve(fa, det, thr, auc, min_fa)
