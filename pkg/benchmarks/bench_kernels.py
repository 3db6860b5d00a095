"""Compiled vs pure-Python kernels: block matching and the full collaborative denoiser.

Run with ``python benchmarks/bench_kernels.py [--size 100] [--repeat 5]``.
Both backends must return identical results; the script checks that before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from rhyde.denoisers import _pykernels, collab
from rhyde.denoisers.collab import PATCH, STRIDE, WINDOW, K_MAX, reference_grid

try:
    from rhyde.denoisers import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _image(size: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    clean = np.sin(6 * xx) * np.cos(4 * yy) + (xx > 0.5)
    return clean + 0.1 * rng.standard_normal(clean.shape)


def _refs(size: int):
    g = reference_grid(size, PATCH, STRIDE)
    rr, cc = np.meshgrid(g, g, indexing="ij")
    return np.ascontiguousarray(rr.ravel(), dtype=np.int64), np.ascontiguousarray(cc.ravel(), dtype=np.int64)


def _collab_with(kern, img):
    saved = collab.kernels
    collab.kernels = kern
    try:
        return collab.denoise_collab(img, 0.1)
    finally:
        collab.kernels = saved


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; only the Python backend is available")
    img = _image(args.size)
    rr, cc = _refs(args.size)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
        m_py = _pykernels.block_match(img, rr, cc, PATCH, WINDOW, K_MAX)
        m_c = _ckernels.block_match(img, rr, cc, PATCH, WINDOW, K_MAX)
        assert all(np.array_equal(a, b) for a, b in zip(m_py, m_c)), "block_match differs between backends"
        assert np.array_equal(_collab_with(_pykernels, img), _collab_with(_ckernels, img)), "collab output differs"

    print(f"{args.size}x{args.size} image, {rr.size} reference patches, best of {args.repeat}")
    print(f"{'kernel':<16}{'backend':<10}{'seconds':>10}")
    times = {}
    for name, kern in backends.items():
        t_bm = min(timeit.repeat(lambda: kern.block_match(img, rr, cc, PATCH, WINDOW, K_MAX), number=1, repeat=args.repeat))
        t_full = min(timeit.repeat(lambda: _collab_with(kern, img), number=1, repeat=args.repeat))
        times[name] = (t_bm, t_full)
        print(f"{'block_match':<16}{name:<10}{t_bm:>10.4f}")
        print(f"{'denoise_collab':<16}{name:<10}{t_full:>10.4f}")
    if "cython" in times:
        print(f"speed-up: block_match x{times['python'][0] / times['cython'][0]:.1f}, "
              f"denoise_collab x{times['python'][1] / times['cython'][1]:.1f}")


if __name__ == "__main__":
    main()
