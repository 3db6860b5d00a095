"""Image-quality metrics: per-band PSNR/SSIM, 3D-PSNR and mean spectral angle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatchError, ValidationError

SSIM_WINDOW = 8


def psnr_band(x_clean, x_hat, peak: float) -> float:
    """``10 log10(peak^2 / MSE)``; ``math.inf`` when the images are identical."""
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    if not peak > 0:
        raise ValidationError(f"peak must be positive, got {peak}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_3d(x_clean, x_hat, x_max: Optional[float] = None) -> float:
    """``10 log10(x_max^2 / ||X - X_hat||_F^2)``.

    Note the denominator is the total squared error, not a per-entry mean.
    `x_max` defaults to the largest entry of `x_clean`.
    """
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    if x_max is None:
        x_max = float(a.max())
    if not x_max > 0:
        raise ValidationError(f"x_max must be positive, got {x_max}")
    err = float(np.sum((a - b) ** 2))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(x_max * x_max / err)


def ssim_band(x_clean, x_hat, peak: float, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window x window`` uniform windows (stride 1)."""
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatchError(f"expected two equal 2-D images, got {a.shape} and {b.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        raise ValidationError(f"image {a.shape} is smaller than the {window}x{window} SSIM window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def msam(x_clean, x_hat) -> float:
    """Mean spectral angle in degrees; pixels with a zero spectrum are skipped."""
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    ok = (na > 0) & (nb > 0)
    skipped = int((~ok).sum())
    if not ok.any():
        raise ValidationError("every pixel has a zero spectrum; MSAM is undefined")
    if skipped:
        warnings.warn(f"MSAM skipped {skipped} zero-spectrum pixel(s)", RuntimeWarning, stacklevel=2)
    cos = np.einsum("ij,ij->j", a[:, ok], b[:, ok]) / (na[ok] * nb[ok])
    return float(np.degrees(np.mean(np.arccos(np.clip(cos, -1.0, 1.0)))))


@dataclass(frozen=True)
class QualityReport:
    per_band_psnr: np.ndarray
    per_band_ssim: np.ndarray
    psnr_3d: float
    msam: float

    @property
    def mpsnr(self) -> float:
        return float(np.mean(self.per_band_psnr))

    @property
    def mssim(self) -> float:
        return float(np.mean(self.per_band_ssim))


def band_peaks(x_clean, peak: Optional[float] = None) -> np.ndarray:
    """Per-band maxima of the clean image, or one global `peak` for every band."""
    x = np.asarray(x_clean, dtype=np.float64)
    if peak is not None:
        return np.full(x.shape[0], float(peak))
    return x.max(axis=1)


def quality_report(x_clean, x_hat, shape: tuple[int, int], peak: Optional[float] = None) -> QualityReport:
    """All metrics for two ``(n_b, n)`` band matrices on a ``shape`` pixel grid."""
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    rows, cols = shape
    peaks = band_peaks(a, peak)
    psnr = np.array([psnr_band(a[k], b[k], peaks[k]) for k in range(a.shape[0])])
    ssim = np.array([
        ssim_band(a[k].reshape(rows, cols), b[k].reshape(rows, cols), peaks[k]) for k in range(a.shape[0])
    ])
    return QualityReport(psnr, ssim, psnr_3d(a, b, peak), msam(a, b))


def mpsnr(x_clean, x_hat, peak: Optional[float] = None) -> float:
    a = np.asarray(x_clean, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    peaks = band_peaks(a, peak)
    return float(np.mean([psnr_band(a[k], b[k], peaks[k]) for k in range(a.shape[0])]))
