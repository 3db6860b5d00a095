"""Pure-numpy block matching and aggregation (fallback for ``_ckernels``).

Distances are accumulated pixel by pixel in row-major patch order so the
results are bit-identical to the compiled kernels.
"""

import numpy as np


def block_match(img, ref_r, ref_c, d, window, k_max):
    rows, cols = img.shape
    n_ref = len(ref_r)
    members = np.full((n_ref, k_max, 2), -1, dtype=np.int64)
    counts = np.zeros(n_ref, dtype=np.int64)
    for t in range(n_ref):
        r, c = int(ref_r[t]), int(ref_c[t])
        members[t, 0] = (r, c)
        counts[t] = 1
        if k_max == 1:
            continue
        r0, r1 = max(0, r - window), min(rows - d, r + window)
        c0, c1 = max(0, c - window), min(cols - d, c + window)
        h, w = r1 - r0 + 1, c1 - c0 + 1
        dist = np.zeros((h, w))
        for i in range(d):
            for j in range(d):
                diff = img[r0 + i:r0 + i + h, c0 + j:c0 + j + w] - img[r + i, c + j]
                dist += diff * diff
        flat = dist.ravel()
        order = np.argsort(flat, kind="stable")
        order = order[order != (r - r0) * w + (c - c0)][: k_max - 1]
        nb = order.size
        members[t, 1:nb + 1, 0] = r0 + order // w
        members[t, 1:nb + 1, 1] = c0 + order % w
        counts[t] = nb + 1
    return members, counts


def aggregate(acc, wsum, est, pos):
    n, d0, d1 = est.shape
    ii, jj = np.meshgrid(np.arange(d0), np.arange(d1), indexing="ij")
    rr = (pos[:, 0, None, None] + ii).ravel()
    cc = (pos[:, 1, None, None] + jj).ravel()
    np.add.at(acc, (rr, cc), est.ravel())
    np.add.at(wsum, (rr, cc), 1.0)
