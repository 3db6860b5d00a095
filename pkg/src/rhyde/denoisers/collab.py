"""Single-stage block-matching collaborative filter.

Each reference patch on a stride grid collects its most similar patches in a
search window, the stack goes through a 2-D DCT per patch and a Haar
transform across the stack, coefficients below ``threshold * sigma`` are
zeroed (the per-patch DC plane is kept), and the inverse-transformed patches
are averaged back into the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ValidationError
from ._backend import kernels
from .transforms import dct2, haar_matrix, idct2, next_pow2

PATCH = 8
STRIDE = 4
WINDOW = 16
K_MAX = 16
THRESHOLD = 2.7


@dataclass(frozen=True)
class PatchGroup:
    reference_index: tuple[int, int]
    member_indices: list[tuple[int, int]]
    patch_size: int
    patches: np.ndarray


def _as_image(image) -> np.ndarray:
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {img.shape}")
    return img


def find_similar_patches(image, ref, d: int = PATCH, window: int = WINDOW, k_max: int = K_MAX) -> PatchGroup:
    """Up to `k_max` patches closest to the one at `ref`, reference first.

    Candidates are ranked by squared L2 distance; ties go to the earlier
    candidate in row-major scan order.
    """
    img = _as_image(image)
    rows, cols = img.shape
    r, c = (int(v) for v in ref)
    if d > rows or d > cols:
        raise ValidationError(f"patch size {d} exceeds image {rows}x{cols}")
    if not (0 <= r <= rows - d and 0 <= c <= cols - d):
        raise ValidationError(f"reference patch at ({r},{c}) does not fit in the image")
    if window < 0 or k_max < 1:
        raise ValidationError("window must be >= 0 and k_max >= 1")
    members, counts = kernels.block_match(
        img, np.array([r], dtype=np.int64), np.array([c], dtype=np.int64), d, window, k_max
    )
    idx = [tuple(int(v) for v in members[0, k]) for k in range(counts[0])]
    patches = np.stack([img[i:i + d, j:j + d] for i, j in idx])
    return PatchGroup((r, c), idx, d, patches)


def reference_grid(size: int, d: int, stride: int) -> np.ndarray:
    """Stride positions covering ``[0, size - d]``, last position always included."""
    pos = list(range(0, size - d + 1, stride))
    if pos[-1] != size - d:
        pos.append(size - d)
    return np.array(pos, dtype=np.int64)


def denoise_collab(image, sigma, patch: int = PATCH, stride: int = STRIDE, window: int = WINDOW,
                   k_max: int = K_MAX, threshold: float = THRESHOLD) -> np.ndarray:
    img = _as_image(image)
    sigma = float(sigma)
    if sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0 or np.ptp(img) == 0:
        return img.copy()
    rows, cols = img.shape
    d = min(int(patch), rows, cols)
    gr, gc = np.meshgrid(reference_grid(rows, d, stride), reference_grid(cols, d, stride), indexing="ij")
    ref_r, ref_c = gr.ravel().copy(), gc.ravel().copy()
    members, counts = kernels.block_match(img, ref_r, ref_c, d, int(window), int(k_max))

    views = sliding_window_view(img, (d, d))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    est = np.empty((offsets[-1], d, d))
    pos = np.empty((offsets[-1], 2), dtype=np.int64)
    thr = threshold * sigma
    padded = np.array([next_pow2(k) for k in counts])
    for g in np.unique(padded):
        sel = np.flatnonzero(padded == g)
        # pad each group to g members by repeating its last member
        slot = np.minimum(np.arange(g)[None, :], counts[sel, None] - 1)
        idx = members[sel[:, None], slot]
        stack = views[idx[..., 0], idx[..., 1]]
        h = haar_matrix(int(g))
        coef = np.einsum("gh,mhij->mgij", h, dct2(stack))
        keep = np.abs(coef) > thr
        keep[:, :, 0, 0] = True
        coef = np.where(keep, coef, 0.0)
        out = idct2(np.einsum("hg,mhij->mgij", h, coef))
        for row, t in enumerate(sel):
            k = counts[t]
            est[offsets[t]:offsets[t] + k] = out[row, :k]
            pos[offsets[t]:offsets[t] + k] = members[t, :k]

    acc = np.zeros_like(img)
    wsum = np.zeros_like(img)
    kernels.aggregate(acc, wsum, np.ascontiguousarray(est), pos)
    return acc / wsum
