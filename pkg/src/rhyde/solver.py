"""RhyDe: split augmented-Lagrangian solver for low-rank + self-similar + column-sparse denoising.

The problem, on whitened data ``Y`` with a fixed orthonormal basis ``E``::

    min_{Z,S}  1/2 ||E Z + S - Y||_F^2 + lambda1 phi(Z) + lambda2 sum_i ||s_i||_2

is split with ``A = [Z; S]`` and three auxiliary variables,
``V1 = [E, I] A``, ``V2 = [I, 0] A``, ``V3 = [0, I] A``. ``phi`` is never
written down: its proximity step is a plugged single-image denoiser applied
to each eigen-image (row of ``Z``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, special

from .errors import DenoiserError, DivergenceError, DimensionMismatchError, ValidationError
from .subspace import SubspaceBasis

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RhydeParams:
    p: int
    mu1: float = 1.0
    mu2: float = 1.0
    mu3: float = 1.0
    lambda2: Optional[float] = None
    p_value: float = 1e-2
    max_iters: int = 30
    rel_tol: float = 1e-3
    eigen_noise_std: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.p < 1:
            raise ValidationError(f"p must be >= 1, got {self.p}")
        for name in ("mu1", "mu2", "mu3"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.lambda2 is not None and not self.lambda2 >= 0:
            raise ValidationError("lambda2 must be nonnegative")
        if not 0 < self.p_value < 1:
            raise ValidationError(f"p_value must lie in (0, 1), got {self.p_value}")
        if self.max_iters < 1 or not self.rel_tol >= 0:
            raise ValidationError("max_iters must be >= 1 and rel_tol >= 0")
        if self.eigen_noise_std is not None:
            s = np.asarray(self.eigen_noise_std, dtype=np.float64).reshape(-1)
            if s.size != self.p or np.any(s < 0) or not np.all(np.isfinite(s)):
                raise ValidationError(f"eigen_noise_std needs {self.p} finite nonnegative entries")
            object.__setattr__(self, "eigen_noise_std", s)

    def resolved_lambda2(self, n_b: int) -> float:
        return self.lambda2 if self.lambda2 is not None else lambda2_from_pvalue(self.p_value, n_b)


@dataclass
class SolverState:
    A: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    V3: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    iter: int = 0

    @classmethod
    def initial(cls, y, basis: SubspaceBasis) -> "SolverState":
        n_b, n = y.shape
        p = basis.p
        return cls(
            A=np.zeros((p + n_b, n)),
            V1=np.array(y, dtype=np.float64, copy=True),
            V2=basis.basis.T @ y,
            V3=np.zeros((n_b, n)),
            D1=np.zeros((n_b, n)),
            D2=np.zeros((p, n)),
            D3=np.zeros((n_b, n)),
        )


@dataclass(frozen=True)
class RhydeResult:
    x_hat: np.ndarray
    z_hat: np.ndarray
    s_hat: np.ndarray
    trace: list = field(default_factory=list)
    iters_run: int = 0
    lambda2: float = math.nan


# --------------------------------------------------------------------------
# Scalar helpers
# --------------------------------------------------------------------------

def vector_soft_threshold(x, tau: float) -> np.ndarray:
    """Proximity operator of ``tau * ||.||_2``: shrink the vector's norm by `tau`."""
    x = np.asarray(x, dtype=np.float64)
    nrm = float(np.linalg.norm(x))
    shrunk = max(nrm - tau, 0.0)
    if shrunk == 0.0:
        return np.zeros_like(x)
    return (shrunk / (shrunk + tau)) * x


def column_soft_threshold(u, tau: float) -> np.ndarray:
    """:func:`vector_soft_threshold` applied to every column of `u`."""
    u = np.asarray(u, dtype=np.float64)
    if tau == 0:
        return u.copy()
    norms = np.sqrt(np.einsum("ij,ij->j", u, u))
    shrunk = np.maximum(norms - tau, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(shrunk > 0, shrunk / (shrunk + tau), 0.0)
    return u * scale


def chi_square_inverse_cdf(prob: float, dof: int) -> float:
    if not 0 < prob < 1:
        raise ValidationError(f"probability must lie in (0, 1), got {prob}")
    if dof < 1:
        raise ValidationError(f"degrees of freedom must be positive, got {dof}")
    return float(special.chdtri(dof, 1.0 - prob))


def lambda2_from_pvalue(p_value: float, n_b: int) -> float:
    """Column threshold under which a whitened noise-only spectrum falls with probability ``1 - p_value``."""
    return math.sqrt(chi_square_inverse_cdf(1.0 - p_value, n_b))


def relative_change(a_prev, a_next, warn: bool = True) -> float:
    a_prev = np.asarray(a_prev)
    a_next = np.asarray(a_next)
    if a_prev.shape != a_next.shape:
        raise DimensionMismatchError(f"shape mismatch {a_prev.shape} vs {a_next.shape}")
    den = np.linalg.norm(a_prev)
    if den == 0:
        if warn:
            warnings.warn("relative change from a zero iterate is infinite", RuntimeWarning, stacklevel=2)
        return math.inf
    return float(np.linalg.norm(a_next - a_prev) / den)


# --------------------------------------------------------------------------
# Closed-form updates
# --------------------------------------------------------------------------

def a_system_matrix(basis: SubspaceBasis, params: RhydeParams) -> np.ndarray:
    """Normal-equation matrix of the A-update (constant over iterations)."""
    e = basis.basis
    n_b, p = e.shape
    m = np.empty((p + n_b, p + n_b))
    m[:p, :p] = (params.mu1 + params.mu2) * np.eye(p)
    m[:p, p:] = params.mu1 * e.T
    m[p:, :p] = params.mu1 * e
    m[p:, p:] = (params.mu1 + params.mu3) * np.eye(n_b)
    return m


def factor_a_system(basis: SubspaceBasis, params: RhydeParams):
    try:
        return linalg.cho_factor(a_system_matrix(basis, params), lower=True)
    except linalg.LinAlgError as exc:  # impossible for mu > 0 and orthonormal E
        raise ValidationError(f"A-update matrix is not positive definite: {exc}") from exc


def a_rhs(state: SolverState, params: RhydeParams, basis: SubspaceBasis) -> np.ndarray:
    e = basis.basis
    p = basis.p
    w1 = params.mu1 * (state.V1 - state.D1)
    rhs = np.empty_like(state.A)
    rhs[:p] = e.T @ w1 + params.mu2 * (state.V2 - state.D2)
    rhs[p:] = w1 + params.mu3 * (state.V3 - state.D3)
    return rhs


def update_A(state: SolverState, params: RhydeParams, basis: SubspaceBasis, factor=None) -> np.ndarray:
    if basis.p != params.p:
        raise DimensionMismatchError(f"basis has p={basis.p}, params p={params.p}")
    if factor is None:
        factor = factor_a_system(basis, params)
    return linalg.cho_solve(factor, a_rhs(state, params, basis))


def apply_E_I(a, basis: SubspaceBasis) -> np.ndarray:
    """``[E, I] A``."""
    p = basis.p
    return basis.basis @ a[:p] + a[p:]


def update_V1(y, A, D1, mu1: float, basis: SubspaceBasis) -> np.ndarray:
    return (np.asarray(y, dtype=np.float64) + mu1 * (apply_E_I(A, basis) + D1)) / (1.0 + mu1)


def eigen_image_sigmas(params: RhydeParams, basis: SubspaceBasis, noise_cov=None) -> np.ndarray:
    """Noise std handed to the denoiser for each eigen-image: ``sqrt(e_i^T C e_i)``.

    `noise_cov` defaults to the identity (whitened data), giving all ones.
    """
    if params.eigen_noise_std is not None:
        return params.eigen_noise_std
    if noise_cov is None:
        return np.ones(basis.p)
    e = basis.basis
    return np.sqrt(np.clip(np.einsum("ij,ik,kj->j", e, np.asarray(noise_cov), e), 0.0, None))


def update_V2(A, D2, params: RhydeParams, denoiser: Callable, shape: tuple[int, int],
              sigmas=None) -> np.ndarray:
    """Denoise each row of ``[I, 0] A + D2`` as a `shape` image."""
    p = params.p
    rows, cols = shape
    v2p = A[:p] + D2
    if sigmas is None:
        sigmas = params.eigen_noise_std if params.eigen_noise_std is not None else np.ones(p)
    out = np.empty_like(v2p)
    for i in range(p):
        try:
            den = denoiser(v2p[i].reshape(rows, cols), float(sigmas[i]))
        except Exception as exc:
            raise DenoiserError(f"denoiser failed on eigen-image {i}: {exc}", row=i) from exc
        den = np.asarray(den, dtype=np.float64)
        if den.shape != (rows, cols):
            raise DenoiserError(f"denoiser returned shape {den.shape} for eigen-image {i}", row=i)
        out[i] = den.reshape(-1)
    return out


def update_V3(A, D3, params: RhydeParams, lambda2: Optional[float] = None) -> np.ndarray:
    n_b = A.shape[0] - params.p
    lam = params.resolved_lambda2(n_b) if lambda2 is None else lambda2
    return column_soft_threshold(A[params.p:] + D3, lam / params.mu3)


def constraint_residuals(state: SolverState, basis: SubspaceBasis) -> tuple[float, float, float]:
    p = basis.p
    return (
        float(np.linalg.norm(state.V1 - apply_E_I(state.A, basis))),
        float(np.linalg.norm(state.V2 - state.A[:p])),
        float(np.linalg.norm(state.V3 - state.A[p:])),
    )


def rhyde_denoise(y_whitened, basis: SubspaceBasis, params: RhydeParams, denoiser: Callable,
                  shape: tuple[int, int], state: Optional[SolverState] = None,
                  callback: Optional[Callable[[SolverState], None]] = None) -> RhydeResult:
    """Run the splitting iterations until the relative change of ``A`` drops below ``rel_tol``.

    Parameters
    ----------
    y_whitened : (n_b, n) array
        Data whose noise is approximately i.i.d. with unit variance.
    basis : SubspaceBasis
        Signal subspace with ``basis.p == params.p``.
    params : RhydeParams
    denoiser : callable
        ``denoiser(image, sigma) -> image`` applied to each eigen-image.
    shape : (rows, cols)
        Spatial grid of the pixels, ``rows * cols == n``.
    state : SolverState, optional
        Starting point; defaults to ``SolverState.initial``.
    callback : callable, optional
        Called with the state after every iteration.

    Returns
    -------
    RhydeResult
        ``x_hat = E z_hat + s_hat`` together with the convergence trace.
    """
    y = np.asarray(y_whitened, dtype=np.float64)
    n_b, n = y.shape
    if basis.n_b != n_b or basis.p != params.p:
        raise DimensionMismatchError(f"data {y.shape}, basis {basis.basis.shape}, params p={params.p}")
    if shape[0] * shape[1] != n:
        raise DimensionMismatchError(f"grid {shape} does not hold {n} pixels")
    p = params.p
    lam2 = params.resolved_lambda2(n_b)
    sigmas = params.eigen_noise_std if params.eigen_noise_std is not None else np.ones(p)
    st = state if state is not None else SolverState.initial(y, basis)
    factor = factor_a_system(basis, params)
    trace = []
    a_prev = st.A
    for k in range(params.max_iters):
        st.A = update_A(st, params, basis, factor)
        st.V1 = update_V1(y, st.A, st.D1, params.mu1, basis)
        st.V2 = update_V2(st.A, st.D2, params, denoiser, shape, sigmas)
        st.V3 = update_V3(st.A, st.D3, params, lam2)
        st.D1 = st.D1 - (st.V1 - apply_E_I(st.A, basis))
        st.D2 = st.D2 - (st.V2 - st.A[:p])
        st.D3 = st.D3 - (st.V3 - st.A[p:])
        st.iter = k + 1
        for name in ("A", "V1", "V2", "V3"):
            if not np.all(np.isfinite(getattr(st, name))):
                raise DivergenceError(f"non-finite {name} at iteration {k + 1}", iteration=k + 1)
        change = relative_change(a_prev, st.A, warn=False)
        trace.append(change)
        log.debug("iter %d rel_change %.3e", k + 1, change)
        if callback is not None:
            callback(st)
        a_prev = st.A
        if change < params.rel_tol:
            break
    z_hat = st.A[:p].copy()
    s_hat = st.A[p:].copy()
    x_hat = basis.basis @ z_hat + s_hat
    return RhydeResult(x_hat, z_hat, s_hat, trace, st.iter, lam2)
