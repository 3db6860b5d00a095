import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rhyde.denoisers import (
    BACKEND, REGISTRY, _pykernels, collab, denoise_collab, denoise_dct, find_similar_patches, get_denoiser,
    parse_options,
)
from rhyde.denoisers.transforms import dct2, haar_matrix, idct2, next_pow2
from rhyde.errors import ValidationError

try:
    from rhyde.denoisers import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
NAMES = sorted(REGISTRY)


def _piecewise(size=64, seed=0, sigma=0.1):
    rng = np.random.default_rng(seed)
    clean = np.zeros((size, size))
    clean[: size // 2, : size // 3] = 1.0
    clean[size // 4:, size // 2:] = 0.5
    clean[size // 2 + 5: size - 6, 6: size // 2] = -0.4
    return clean, clean + sigma * rng.standard_normal(clean.shape)


# --- the contract every registered denoiser must meet ------------------------------------------

@pytest.mark.invariant
@pytest.mark.parametrize("name", NAMES)
def test_contract_sigma_zero_identity(name, rng):
    img = rng.standard_normal((20, 23))
    np.testing.assert_array_equal(get_denoiser(name)(img, 0.0), img)


@pytest.mark.invariant
@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("sigma", [0.0, 0.5, 10.0])
def test_contract_constant_preserved(name, sigma):
    img = np.full((17, 19), 0.37)
    np.testing.assert_array_equal(get_denoiser(name)(img, sigma), img)


@pytest.mark.invariant
@pytest.mark.parametrize("name", NAMES)
def test_contract_finite_and_deterministic(name, rng):
    img = rng.standard_normal((24, 21)) * 100
    a = get_denoiser(name)(img, 3.0)
    b = get_denoiser(name)(img.copy(), 3.0)
    assert a.shape == img.shape and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()


@pytest.mark.invariant
@pytest.mark.parametrize("name", NAMES)
@given(img=arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)), elements=st.floats(-1e3, 1e3)),
       sigma=st.floats(0, 50))
def test_contract_property(name, img, sigma):
    out = get_denoiser(name)(img, sigma)
    assert out.shape == img.shape and np.all(np.isfinite(out))
    if sigma == 0 or np.ptp(img) == 0:
        np.testing.assert_array_equal(out, img)


@pytest.mark.parametrize("name", ["dct", "collab"])
def test_negative_sigma_rejected(name):
    with pytest.raises(ValidationError):
        get_denoiser(name)(np.zeros((8, 8)), -1.0)


# --- quality -----------------------------------------------------------------------------------

def test_collab_halves_error():
    clean, noisy = _piecewise()
    out = denoise_collab(noisy, 0.1)
    assert np.mean((out - clean) ** 2) < 0.5 * np.mean((noisy - clean) ** 2)


def test_dct_reduces_error():
    clean, noisy = _piecewise()
    out = denoise_dct(noisy, 0.1)
    assert np.mean((out - clean) ** 2) < 0.7 * np.mean((noisy - clean) ** 2)


@pytest.mark.invariant
@pytest.mark.parametrize("name", ["dct", "collab"])
@pytest.mark.parametrize("shift", [(1, 0), (0, 3), (2, 2)])
def test_shift_consistency(name, shift):
    # translate by cropping two offset windows out of one larger scene
    clean, noisy = _piecewise(size=80, seed=4)
    n, (dr, dc) = 64, shift
    den = get_denoiser(name)
    a = den(noisy[:n, :n], 0.1)
    b = den(noisy[dr:dr + n, dc:dc + n], 0.1)
    # compare on the pixels both crops share
    common = clean[dr:n, dc:n]
    mse_a = np.mean((a[dr:, dc:] - common) ** 2)
    mse_b = np.mean((b[:n - dr, :n - dc] - common) ** 2)
    assert abs(mse_b - mse_a) < 0.2 * mse_a


def test_collab_options_and_small_images(rng):
    img = rng.standard_normal((5, 7))
    out = denoise_collab(img, 1.0)  # patch shrinks to fit
    assert out.shape == img.shape
    out = get_denoiser("collab", patch=4, stride=2, k_max=4, threshold=2.0)(rng.standard_normal((16, 16)), 0.5)
    assert np.all(np.isfinite(out))


# --- block matching --------------------------------------------------------------------------------

def test_constant_image_fills_in_scan_order():
    g = find_similar_patches(np.ones((20, 20)), (5, 5), d=4, window=3, k_max=6)
    assert g.member_indices[0] == (5, 5)
    assert g.member_indices[1:] == [(2, 2), (2, 3), (2, 4), (2, 5), (2, 6)]
    assert g.patches.shape == (6, 4, 4) and g.patch_size == 4


def test_k_max_one_is_reference_only(rng):
    g = find_similar_patches(rng.standard_normal((12, 12)), (3, 4), d=4, window=5, k_max=1)
    assert g.member_indices == [(3, 4)]


def test_planted_duplicate_ranked_second(rng):
    img = rng.standard_normal((8, 8))
    img[3:7, 4:8] = img[0:4, 1:5]
    g = find_similar_patches(img, (0, 1), d=4, window=8, k_max=5)
    # exhaustive oracle
    cands = [(i, j) for i in range(5) for j in range(5) if (i, j) != (0, 1)]
    dist = [np.sum((img[i:i + 4, j:j + 4] - img[0:4, 1:5]) ** 2) for i, j in cands]
    assert g.member_indices[1] == (3, 4) == cands[int(np.argmin(dist))]
    ranked = [cands[k] for k in np.argsort(dist, kind="stable")[:4]]
    assert g.member_indices[1:] == ranked


@pytest.mark.invariant
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(0, 6))
def test_group_invariants(seed, k_max, window):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 3, (12, 14)).astype(float)  # many ties
    r, c = int(rng.integers(0, 9)), int(rng.integers(0, 11))
    g = find_similar_patches(img, (r, c), d=4, window=window, k_max=k_max)
    assert 1 <= len(g.member_indices) <= k_max
    assert g.member_indices[0] == (r, c)
    assert len(set(g.member_indices)) == len(g.member_indices)
    for i, j in g.member_indices:
        assert 0 <= i <= 8 and 0 <= j <= 10 and abs(i - r) <= window and abs(j - c) <= window


@pytest.mark.parametrize("ref", [(9, 0), (0, 9)])
def test_patch_must_fit(rng, ref):
    with pytest.raises(ValidationError):
        find_similar_patches(rng.standard_normal((12, 12)), ref, d=4)


def test_patch_larger_than_image():
    with pytest.raises(ValidationError):
        find_similar_patches(np.zeros((3, 3)), (0, 0), d=4)


# --- compiled vs pure-Python kernels ------------------------------------------------------------------

@pytest.mark.invariant
@needs_ext
@given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.integers(3, 30), st.integers(1, 20), st.integers(0, 8))
def test_block_match_backends_identical(seed, rows, cols, k_max, window):
    rng = np.random.default_rng(seed)
    img = np.round(rng.standard_normal((rows, cols)), 1)  # rounding creates ties
    d = min(3, rows, cols)
    rr, cc = np.meshgrid(collab.reference_grid(rows, d, 2), collab.reference_grid(cols, d, 2), indexing="ij")
    rr, cc = rr.ravel().copy(), cc.ravel().copy()
    a = _pykernels.block_match(img, rr, cc, d, window, k_max)
    b = _ckernels.block_match(img, rr, cc, d, window, k_max)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@pytest.mark.invariant
@needs_ext
def test_aggregate_backends_identical(rng):
    est = rng.standard_normal((50, 4, 4))
    pos = rng.integers(0, 12, (50, 2)).astype(np.int64)
    out = []
    for kern in (_pykernels, _ckernels):
        acc, wsum = np.zeros((16, 16)), np.zeros((16, 16))
        kern.aggregate(acc, wsum, est, pos)
        out.append((acc, wsum))
    np.testing.assert_array_equal(out[0][0], out[1][0])
    np.testing.assert_array_equal(out[0][1], out[1][1])


@pytest.mark.invariant
@needs_ext
def test_collab_backends_identical(monkeypatch):
    _, noisy = _piecewise(size=48, seed=9)
    results = []
    for kern in (_pykernels, _ckernels):
        monkeypatch.setattr(collab, "kernels", kern)
        results.append(denoise_collab(noisy, 0.1))
    assert results[0].tobytes() == results[1].tobytes()


def test_pure_python_switch():
    env = dict(os.environ, RHYDE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rhyde.denoisers import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert BACKEND in ("cython", "python")


# --- transforms --------------------------------------------------------------------------------------

@pytest.mark.invariant
def test_dct_round_trip_and_parseval(rng):
    p = rng.standard_normal((10, 8, 8))
    c = dct2(p)
    np.testing.assert_allclose(idct2(c), p, atol=1e-10)
    np.testing.assert_allclose(np.sum(c ** 2, axis=(1, 2)), np.sum(p ** 2, axis=(1, 2)), rtol=1e-10)


@pytest.mark.invariant
@pytest.mark.parametrize("size", [1, 2, 4, 8, 16, 32])
def test_haar_orthonormal(size, rng):
    h = haar_matrix(size)
    np.testing.assert_allclose(h @ h.T, np.eye(size), atol=1e-12)
    v = rng.standard_normal(size)
    np.testing.assert_allclose(h.T @ (h @ v), v, atol=1e-10)
    assert np.sum((h @ v) ** 2) == pytest.approx(np.sum(v ** 2), rel=1e-10)
    np.testing.assert_allclose(h[0], np.full(size, 1 / np.sqrt(size)), atol=1e-15)


def test_haar_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        haar_matrix(6)


def test_next_pow2():
    assert [next_pow2(k) for k in (1, 2, 3, 5, 8, 9, 16)] == [1, 2, 4, 8, 8, 16, 16]


# --- registry -----------------------------------------------------------------------------------------

def test_registry_and_options():
    assert set(REGISTRY) == {"identity", "dct", "collab"}
    with pytest.raises(ValidationError):
        get_denoiser("bm3d")
    assert parse_options(["patch=8", "threshold=2.5"]) == {"patch": 8, "threshold": 2.5}
    for bad in (["patch"], ["k=abc"]):
        with pytest.raises(ValidationError):
            parse_options(bad)
