"""Signal-subspace estimation and projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError

# Use the band Gram matrix instead of a thin SVD once pixels outnumber bands by this factor.
GRAM_RATIO = 4


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal ``(n_b, p)`` basis plus the full singular-value spectrum of the data."""

    basis: np.ndarray
    singular_values: np.ndarray

    @property
    def n_b(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    def energy_fractions(self) -> np.ndarray:
        """Cumulative fraction of ``||Y||_F^2`` captured by the first k singular directions."""
        e = self.singular_values ** 2
        total = e.sum()
        return np.cumsum(e) / total if total > 0 else np.zeros_like(e)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def left_singular(y) -> tuple[np.ndarray, np.ndarray]:
    """All left singular vectors/values of `y`, sorted non-increasing, signs fixed."""
    y = np.asarray(y, dtype=np.float64)
    n_b, n = y.shape
    if n >= GRAM_RATIO * n_b:
        w, u = np.linalg.eigh(y @ y.T)
        order = np.argsort(w)[::-1]
        u = u[:, order]
        s = np.sqrt(np.clip(w[order], 0.0, None))
    else:
        u, s, _ = np.linalg.svd(y, full_matrices=False)
    return _fix_signs(u), s


def estimate_basis(y, p: int) -> SubspaceBasis:
    """Basis of the top-`p` left singular vectors of `y`.

    Each vector is signed so that its largest-magnitude entry is positive.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise DimensionMismatchError(f"expected a band matrix, got shape {y.shape}")
    if not 1 <= p <= min(y.shape):
        raise ValidationError(f"subspace dimension p={p} outside [1, {min(y.shape)}]")
    u, s = left_singular(y)
    return SubspaceBasis(np.ascontiguousarray(u[:, :p]), s[: min(y.shape)])


def project(y, sb: SubspaceBasis) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != sb.n_b:
        raise DimensionMismatchError(f"data has {y.shape[0]} bands, basis {sb.n_b}")
    return sb.basis.T @ y


def reconstruct(z, sb: SubspaceBasis) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != sb.p:
        raise DimensionMismatchError(f"coefficients have {z.shape[0]} rows, basis has p={sb.p}")
    return sb.basis @ z
