"""Full denoising pipeline on a band matrix.

Order: optional Anscombe -> noise covariance (estimated or given) -> whiten ->
subspace -> RhyDe -> unwhiten -> optional inverse Anscombe.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import noise
from .denoisers import get_denoiser
from .noise import NoiseModel
from .solver import RhydeParams, RhydeResult, rhyde_denoise
from .subspace import SubspaceBasis, estimate_basis


@dataclass(frozen=True)
class PipelineResult:
    x_hat: np.ndarray
    """Denoised data in the input's units."""
    solver: RhydeResult
    """Solver output in the whitened domain; ``solver.s_hat`` feeds the detector."""
    basis: SubspaceBasis
    noise_model: NoiseModel


def denoise(y, shape: tuple[int, int], params: RhydeParams, denoiser: Callable | str = "collab",
            noise_model: Optional[NoiseModel] = None, anscombe: bool = False,
            estimate_noise: bool = True, noise_structure: str = "diagonal") -> PipelineResult:
    """Denoise a ``(n_b, n)`` band matrix laid out on a ``shape`` pixel grid.

    Without `noise_model`, the covariance is estimated from the data when
    `estimate_noise` is true, otherwise the data are assumed already white.
    """
    if isinstance(denoiser, str):
        denoiser = get_denoiser(denoiser)
    y = np.asarray(y, dtype=np.float64)
    work = noise.anscombe_forward(y) if anscombe else y
    if noise_model is None:
        noise_model = noise.estimate_noise_covariance(work, noise_structure) if estimate_noise else NoiseModel.identity(y.shape[0])
    yw = noise.whiten(work, noise_model)
    basis = estimate_basis(yw, params.p)
    if params.eigen_noise_std is None:
        # whitened noise has identity covariance, so every eigen-image has unit noise std
        params = dataclasses.replace(params, eigen_noise_std=np.ones(params.p))
    res = rhyde_denoise(yw, basis, params, denoiser, shape)
    x_hat = noise.unwhiten(res.x_hat, noise_model)
    if anscombe:
        x_hat = noise.anscombe_inverse_algebraic(x_hat)
    return PipelineResult(x_hat, res, basis, noise_model)
