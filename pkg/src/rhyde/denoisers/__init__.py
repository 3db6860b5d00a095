"""Plug-and-play single-image denoisers.

Every denoiser is a callable ``denoise(image, sigma) -> image`` that obeys:
finite output for finite input, identity when ``sigma == 0``, constant images
returned unchanged, and deterministic results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ValidationError
from ._backend import BACKEND
from .collab import PatchGroup, denoise_collab, find_similar_patches
from .dct import denoise_dct


def denoise_identity(image, sigma) -> np.ndarray:
    return np.array(image, dtype=np.float64, copy=True)


REGISTRY: dict[str, Callable] = {
    "identity": denoise_identity,
    "dct": denoise_dct,
    "collab": denoise_collab,
}


@dataclass(frozen=True)
class Denoiser:
    name: str
    func: Callable
    options: dict = field(default_factory=dict)

    def __call__(self, image, sigma) -> np.ndarray:
        return self.func(image, sigma, **self.options)


def get_denoiser(name: str, **options) -> Denoiser:
    try:
        func = REGISTRY[name]
    except KeyError:
        raise ValidationError(f"unknown denoiser {name!r}; choose from {sorted(REGISTRY)}") from None
    return Denoiser(name, func, dict(options))


def parse_options(items) -> dict:
    """Turn ``["patch=8", "threshold=2.5"]`` into ``{"patch": 8, "threshold": 2.5}``."""
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"denoiser option must look like key=value, got {item!r}")
        try:
            value = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                raise ValidationError(f"denoiser option {key!r} needs a number, got {raw!r}") from None
        out[key.strip()] = value
    return out


__all__ = [
    "BACKEND", "Denoiser", "PatchGroup", "REGISTRY", "denoise_collab", "denoise_dct",
    "denoise_identity", "find_similar_patches", "get_denoiser", "parse_options",
]
