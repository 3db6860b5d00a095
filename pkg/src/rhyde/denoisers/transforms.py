"""Orthonormal transforms used by the patch denoisers."""

from functools import lru_cache

import numpy as np
from scipy import fft


def dct2(patches):
    """Orthonormal 2-D DCT-II over the last two axes."""
    return fft.dctn(patches, axes=(-2, -1), norm="ortho")


def idct2(coefs):
    return fft.idctn(coefs, axes=(-2, -1), norm="ortho")


@lru_cache(maxsize=None)
def haar_matrix(size: int) -> np.ndarray:
    """Orthonormal Haar matrix; `size` must be a power of two. Row 0 is the average."""
    if size < 1 or size & (size - 1):
        raise ValueError(f"Haar size must be a power of two, got {size}")
    h = np.ones((1, 1))
    while h.shape[0] < size:
        m = h.shape[0]
        top = np.kron(h, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        h = np.vstack([top, bottom]) / np.sqrt(2.0)
    h.flags.writeable = False
    return h


def next_pow2(k: int) -> int:
    return 1 << (int(k) - 1).bit_length()
