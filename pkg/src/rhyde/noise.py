"""Spectral noise covariance: estimation, SPD square roots, whitening and Anscombe."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    HscFormatError,
    NotPositiveDefiniteError,
    TruncatedPayloadError,
    ValidationError,
)

EIG_FLOOR = 1e-10
ANSCOMBE_OFFSET = 3.0 / 8.0
NOISE_MAGIC = b"HSN1"
_HEADER_RE = re.compile(rb"bands=(\d+) dtype=f64")


def spd_sqrt(cov) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root of an SPD matrix and of its inverse.

    Both factors come from one symmetric eigendecomposition so they share
    eigenvectors.
    """
    c = np.asarray(cov, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionMismatchError(f"covariance must be square, got {c.shape}")
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    if w[0] <= 0 or not np.all(np.isfinite(w)):
        raise NotPositiveDefiniteError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})")
    s = np.sqrt(w)
    sqrt_c = (v * s) @ v.T
    inv_sqrt_c = (v / s) @ v.T
    return 0.5 * (sqrt_c + sqrt_c.T), 0.5 * (inv_sqrt_c + inv_sqrt_c.T)


@dataclass(frozen=True)
class NoiseModel:
    cov: np.ndarray
    sqrt_cov: np.ndarray
    inv_sqrt_cov: np.ndarray

    @classmethod
    def from_cov(cls, cov) -> "NoiseModel":
        c = np.asarray(cov, dtype=np.float64)
        c = 0.5 * (c + c.T)
        sq, isq = spd_sqrt(c)
        return cls(c, sq, isq)

    @classmethod
    def identity(cls, n_b: int) -> "NoiseModel":
        eye = np.eye(n_b)
        return cls(eye, eye.copy(), eye.copy())

    @property
    def n_b(self) -> int:
        return self.cov.shape[0]

    @property
    def band_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def floor_eigenvalues(cov, scale: float = 0.0) -> np.ndarray:
    """Clamp eigenvalues to ``EIG_FLOOR * max(lambda_max, scale)``.

    `scale` is an absolute reference (e.g. mean signal power per band) that
    keeps the floor positive when the covariance itself vanishes.
    """
    c = np.asarray(cov, dtype=np.float64)
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    floor = EIG_FLOOR * max(float(w[-1]), float(scale))
    if floor <= 0:
        raise NotPositiveDefiniteError("covariance is identically zero and no scale reference was given")
    w = np.maximum(w, floor)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def regression_residuals(y) -> np.ndarray:
    """Residuals of regressing each band on all the other bands (least squares).

    Works on the band Gram matrix, so the cost is ``O(n_b^2 n + n_b^4)``.
    Rank-deficient Grams use the minimum-norm solution.
    """
    y = np.asarray(y, dtype=np.float64)
    n_b = y.shape[0]
    gram = y @ y.T
    beta = np.zeros((n_b, n_b))
    for i in range(n_b):
        others = np.r_[0:i, i + 1:n_b]
        coef, *_ = linalg.lstsq(gram[np.ix_(others, others)], gram[others, i], lapack_driver="gelsd")
        beta[i, others] = coef
    return y - beta @ y


NOISE_STRUCTURES = ("full", "diagonal")


def estimate_noise_covariance(y, structure: str = "full") -> NoiseModel:
    """Multiple-regression noise covariance estimate of a ``(n_b, n)`` band matrix.

    ``structure="diagonal"`` keeps only the per-band variances. Regression
    residuals of two bands are correlated even for uncorrelated noise (each
    residual carries the other band's noise through the regression weights),
    so the diagonal form is the safer choice when band noise is independent.
    """
    if structure not in NOISE_STRUCTURES:
        raise ValidationError(f"structure must be one of {NOISE_STRUCTURES}, got {structure!r}")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise DimensionMismatchError(f"expected a band matrix, got shape {y.shape}")
    n_b, n = y.shape
    if n <= n_b:
        raise ValidationError(f"regression is underdetermined: {n} pixels for {n_b} bands")
    if not np.all(np.isfinite(y)):
        raise ValidationError("band matrix contains non-finite entries")
    w = regression_residuals(y)
    cov = w @ w.T / n
    if structure == "diagonal":
        cov = np.diag(np.diag(cov))
    signal_power = float(np.einsum("ij,ij->", y, y)) / (n * n_b)
    return NoiseModel.from_cov(floor_eigenvalues(cov, scale=signal_power))


def whiten(y, nm: NoiseModel) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != nm.n_b:
        raise DimensionMismatchError(f"band matrix has {y.shape[0]} bands, noise model {nm.n_b}")
    return nm.inv_sqrt_cov @ y


def unwhiten(x, nm: NoiseModel) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != nm.n_b:
        raise DimensionMismatchError(f"band matrix has {x.shape[0]} bands, noise model {nm.n_b}")
    return nm.sqrt_cov @ x


def anscombe_forward(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    neg = y < 0
    if np.any(neg):
        loc = np.unravel_index(int(np.argmax(neg)), y.shape)
        where = f"band={loc[0]} pixel={loc[1]}" if y.ndim == 2 else f"index={loc}"
        raise ValidationError(f"Anscombe transform needs nonnegative data; found {y[loc]:g} at {where}")
    return 2.0 * np.sqrt(y + ANSCOMBE_OFFSET)


def anscombe_inverse_algebraic(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return (t / 2.0) ** 2 - ANSCOMBE_OFFSET


ANSCOMBE_INVERSES = {"algebraic": anscombe_inverse_algebraic}


def anscombe_inverse(t, method: str = "algebraic") -> np.ndarray:
    """Inverse Anscombe; only the algebraic inverse ships, others may be registered."""
    lo = 2.0 * np.sqrt(ANSCOMBE_OFFSET)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < lo - 1e-12):
        raise ValidationError(f"inverse Anscombe expects entries >= {lo:.6f}, min is {t.min():.6f}")
    return ANSCOMBE_INVERSES[method](t)


# --------------------------------------------------------------------------
# Binary cache: "HSN1\n" + "bands=<u> dtype=f64\n" + row-major f64 LE covariance
# --------------------------------------------------------------------------

def save_noise_model(nm: NoiseModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(NOISE_MAGIC + b"\n" + f"bands={nm.n_b} dtype=f64\n".encode("ascii"))
        fh.write(np.ascontiguousarray(nm.cov, dtype="<f8").tobytes())


def load_noise_model(path) -> NoiseModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != NOISE_MAGIC or raw[4:5] != b"\n":
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {NOISE_MAGIC!r}")
    end = raw.find(b"\n", 5)
    m = _HEADER_RE.fullmatch(raw[5:end]) if end > 0 else None
    if m is None:
        raise HscFormatError(f"{path}: malformed noise-model header")
    n_b = int(m.group(1))
    payload = raw[end + 1:]
    if len(payload) != n_b * n_b * 8:
        raise TruncatedPayloadError(f"{path}: expected {n_b * n_b} f64 values, found {len(payload) / 8:g}")
    cov = np.frombuffer(payload, dtype="<f8").reshape(n_b, n_b).astype(np.float64)
    if not np.all(np.isfinite(cov)):
        raise HscFormatError(f"{path}: non-finite covariance entry")
    return NoiseModel.from_cov(cov)
