"""Hyperspectral cube container, HSC file I/O and the semi-real simulator.

Conventions used throughout the package:

* A cube is stored band-sequentially, ``samples[band, row, col]``.
* A band matrix is a plain ``(n_bands, n_pixels)`` float array whose column
  ``r * cols + c`` is the spectrum of pixel ``(r, c)`` (row-major pixels).
* An anomaly mask is a boolean vector of length ``n_pixels``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    HscFormatError,
    NonFiniteSampleError,
    PayloadSizeError,
    TruncatedPayloadError,
    ValidationError,
    ZeroDenominatorError,
)

HSC_MAGIC = b"HSC1"
_HEADER_RE = re.compile(rb"rows=(\d+) cols=(\d+) bands=(\d+) dtype=f32")

# Named RNG consumers. Stream ``i`` is ``SeedSequence(seed).spawn(len(...))[i]``;
# the order below is part of the reproducibility contract, append only.
RNG_STREAMS = (
    "endmembers",
    "abundances",
    "anomaly_spectrum",
    "anomaly_sites",
    "noise_std",
    "noise",
)


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent PCG64 generators, one per named consumer."""
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(RNG_STREAMS, children)}


@dataclass(frozen=True)
class HsiCube:
    """A rows x cols x bands image held band-sequentially.

    ``samples`` has shape ``(bands, rows, cols)``. Use :meth:`from_rcb` to
    wrap a ``(rows, cols, bands)`` array.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 3 or s.size == 0:
            raise ValidationError(f"cube samples must be a non-empty 3-D array, got shape {s.shape}")
        if not np.issubdtype(s.dtype, np.floating):
            s = s.astype(np.float64)
        if not np.all(np.isfinite(s)):
            raise ValidationError("cube contains non-finite samples")
        s = s.view()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_rcb(cls, array) -> "HsiCube":
        return cls(np.moveaxis(np.asarray(array), -1, 0).copy())

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def rows(self) -> int:
        return self.samples.shape[1]

    @property
    def cols(self) -> int:
        return self.samples.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.rows, self.cols, self.bands

    def to_rcb(self) -> np.ndarray:
        return np.moveaxis(self.samples, 0, -1)


def cube_to_matrix(cube: HsiCube) -> np.ndarray:
    """Return the ``(bands, rows*cols)`` band matrix of `cube` (a copy)."""
    return cube.samples.reshape(cube.bands, cube.rows * cube.cols).copy()


def matrix_to_cube(m, rows: int, cols: int) -> HsiCube:
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D band matrix, got shape {m.shape}")
    if rows <= 0 or cols <= 0 or rows * cols != m.shape[1]:
        raise DimensionMismatchError(
            f"cannot reshape {m.shape[1]} pixels into rows={rows} x cols={cols} (= {rows * cols})"
        )
    return HsiCube(m.reshape(m.shape[0], rows, cols).copy())


# --------------------------------------------------------------------------
# HSC binary format
# --------------------------------------------------------------------------

def save_hsc(cube: HsiCube, path) -> None:
    """Write `cube` as ``HSC1``: magic, newline, ASCII header line, f32 LE payload."""
    payload = np.ascontiguousarray(cube.samples, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValidationError("cube samples overflow float32")
    header = f"rows={cube.rows} cols={cube.cols} bands={cube.bands} dtype=f32\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(HSC_MAGIC + b"\n" + header)
        fh.write(payload.tobytes())


def _split_header(raw: bytes, path) -> tuple[tuple[int, int, int], bytes]:
    if len(raw) < 5 or raw[:4] != HSC_MAGIC or raw[4:5] != b"\n":
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {HSC_MAGIC!r}")
    end = raw.find(b"\n", 5)
    if end < 0:
        raise TruncatedPayloadError(f"{path}: header line is not terminated")
    m = _HEADER_RE.fullmatch(raw[5:end])
    if m is None:
        raise HscFormatError(f"{path}: malformed header {raw[5:end][:80]!r}")
    dims = tuple(int(g) for g in m.groups())
    if min(dims) == 0:
        raise HscFormatError(f"{path}: header declares an empty cube {dims}")
    return dims, raw[end + 1:]


def read_hsc_header(path) -> tuple[int, int, int]:
    """Return ``(rows, cols, bands)`` without decoding the payload."""
    with open(path, "rb") as fh:
        head = fh.read(256)
    dims, _ = _split_header(head, path)
    return dims


def load_hsc(path) -> HsiCube:
    with open(path, "rb") as fh:
        raw = fh.read()
    (rows, cols, bands), payload = _split_header(raw, path)
    expected = rows * cols * bands * 4
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: header declares {rows}x{cols}x{bands} = {expected // 4} floats, "
            f"payload holds {len(payload) / 4:g}"
        )
    if len(payload) > expected:
        raise PayloadSizeError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    samples = np.frombuffer(payload, dtype="<f4").reshape(bands, rows, cols)
    if not np.all(np.isfinite(samples)):
        bad = np.argwhere(~np.isfinite(samples))[0]
        raise NonFiniteSampleError(f"{path}: non-finite sample at band={bad[0]} row={bad[1]} col={bad[2]}")
    return HsiCube(samples.astype(np.float32))


# --------------------------------------------------------------------------
# Anomaly masks (CSV: header "row,col", one line per anomalous pixel)
# --------------------------------------------------------------------------

def save_mask_csv(mask, cols: int, path) -> None:
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    with open(path, "w", newline="") as fh:
        fh.write("row,col\n")
        for i in idx:
            fh.write(f"{i // cols},{i % cols}\n")


def load_mask_csv(path, rows: int, cols: int) -> np.ndarray:
    mask = np.zeros(rows * cols, dtype=bool)
    with open(path) as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line == "row,col":
            continue
        try:
            r, c = (int(v) for v in line.split(","))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: expected 'row,col', got {line!r}") from None
        if not (0 <= r < rows and 0 <= c < cols):
            raise ValidationError(f"{path}:{lineno}: pixel ({r},{c}) outside {rows}x{cols} image")
        mask[r * cols + c] = True
    return mask


# --------------------------------------------------------------------------
# Semi-real simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationSpec:
    rows: int
    cols: int
    n_b: int
    p_true: int
    implant_rate: float
    noise_u: float
    seed: int
    anomaly_spectrum: Optional[np.ndarray] = None
    anomaly_scale: float = 1.0
    smoothness: float = 4.0

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0 or self.n_b <= 0:
            raise ValidationError("rows, cols and n_b must be positive")
        if not 0 < self.p_true <= self.n_b:
            raise ValidationError(f"p_true must lie in (0, n_b={self.n_b}], got {self.p_true}")
        if not 0 <= self.implant_rate < 1:
            raise ValidationError(f"implant_rate must lie in [0, 1), got {self.implant_rate}")
        if not self.noise_u >= 0:
            raise ValidationError(f"noise_u must be >= 0, got {self.noise_u}")
        if self.anomaly_spectrum is not None:
            a = np.asarray(self.anomaly_spectrum, dtype=np.float64)
            if a.shape != (self.n_b,):
                raise ValidationError(f"anomaly_spectrum has length {a.size}, expected n_b={self.n_b}")
            if not np.all(np.isfinite(a)):
                raise ValidationError("anomaly_spectrum must be finite")
            object.__setattr__(self, "anomaly_spectrum", a)


@dataclass(frozen=True)
class SimulationResult:
    """Output of :func:`simulate_semireal`.

    Unpacks as ``clean, noisy, mask, noise_std``; the remaining fields are
    ground truth kept for experiments.
    """

    clean: np.ndarray
    noisy: np.ndarray
    mask: np.ndarray
    noise_std: np.ndarray
    background: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    anomaly_spectrum: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.clean, self.noisy, self.mask, self.noise_std))


def _endmembers(rng, n_b, p):
    spectra = np.cumsum(rng.standard_normal((n_b, p)), axis=0)
    spectra -= spectra.min(axis=0)
    spectra += 0.1 * spectra.max(axis=0) + 1e-3
    return spectra / np.linalg.norm(spectra, axis=0)


def _abundances(rng, p, rows, cols, smoothness):
    fields = rng.standard_normal((p, rows, cols))
    for k in range(p):
        fields[k] = ndimage.gaussian_filter(fields[k], smoothness, mode="wrap")
    fields -= fields.mean(axis=(1, 2), keepdims=True)
    fields /= fields.std(axis=(1, 2), keepdims=True) + 1e-300
    w = np.exp(2.0 * fields)
    return (w / w.sum(axis=0)).reshape(p, rows * cols)


def default_anomaly_spectrum(rng, basis, scale):
    """Random unit direction with its projection onto `basis` removed, times `scale`."""
    n_b = basis.shape[0]
    for _ in range(100):
        v = rng.standard_normal(n_b)
        v -= basis @ (basis.T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            return v * (scale / nv)
    raise ValidationError("signal subspace fills the band space; no out-of-subspace anomaly exists")


def simulate_semireal(spec: SimulationSpec) -> SimulationResult:
    """Simulate a low-rank image with implanted rare pixels and band-dependent noise.

    The clean background is ``p_true`` smooth positive spectra mixed by smooth
    sum-to-one abundance fields, scaled so its largest entry is 1. A fraction
    ``implant_rate`` of pixels is then replaced by the anomaly spectrum, and
    finally noise ``n_i ~ N(0, D^2)`` is added with ``diag(D) ~ U(0, noise_u)``.
    """
    streams = rng_streams(spec.seed)
    n = spec.rows * spec.cols

    endmembers = _endmembers(streams["endmembers"], spec.n_b, spec.p_true)
    abundances = _abundances(streams["abundances"], spec.p_true, spec.rows, spec.cols, spec.smoothness)
    background = endmembers @ abundances
    background /= background.max()
    basis, _ = np.linalg.qr(endmembers)

    if spec.anomaly_spectrum is not None:
        anomaly = spec.anomaly_spectrum.copy()
    else:
        scale = spec.anomaly_scale * float(np.median(np.linalg.norm(background, axis=0)))
        anomaly = default_anomaly_spectrum(streams["anomaly_spectrum"], basis, scale)

    n_anom = int(round(spec.implant_rate * n))
    sites = np.sort(streams["anomaly_sites"].choice(n, size=n_anom, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[sites] = True
    clean = background.copy()
    clean[:, mask] = anomaly[:, None]

    noise_std = streams["noise_std"].uniform(0.0, spec.noise_u, size=spec.n_b) if spec.noise_u > 0 else np.zeros(spec.n_b)
    noise = noise_std[:, None] * streams["noise"].standard_normal((spec.n_b, n))
    noisy = clean + noise
    return SimulationResult(clean, noisy, mask, noise_std, background, basis, noise, anomaly)


def orthogonal_residual_power_ratio(clean_with_anomalies, noise, basis, columns=None) -> float:
    """Out-of-subspace energy of the noiseless data relative to that of the noise.

    ``gamma = ||(I - E E^T) X||_F / ||(I - E E^T) N||_F``, evaluated on the
    pixels selected by `columns` (boolean mask or indices; all pixels when
    omitted). `basis` is an orthonormal ``(n_b, p)`` array or any object with
    a ``basis`` attribute.
    """
    e = np.asarray(getattr(basis, "basis", basis), dtype=np.float64)
    x = np.asarray(clean_with_anomalies, dtype=np.float64)
    nz = np.asarray(noise, dtype=np.float64)
    if x.shape != nz.shape or x.shape[0] != e.shape[0]:
        raise DimensionMismatchError(f"shapes disagree: data {x.shape}, noise {nz.shape}, basis {e.shape}")
    if columns is not None:
        x = x[:, columns]
        nz = nz[:, columns]
    num = np.linalg.norm(x - e @ (e.T @ x))
    den = np.linalg.norm(nz - e @ (e.T @ nz))
    if den == 0:
        raise ZeroDenominatorError("noise has no energy outside the subspace")
    return float(num / den)
