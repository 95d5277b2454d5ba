"""Image quality metrics for normalized cubes."""

from __future__ import annotations

import math

import numpy as np

from .cube import SpectralCube

__all__ = ["psnr", "band_psnrs"]


def _check_dims(reference: SpectralCube, test: SpectralCube) -> None:
    if reference.data.shape != test.data.shape:
        raise ValueError(
            f"cube dims differ: {reference.data.shape} vs {test.data.shape}"
        )


def psnr(reference: SpectralCube, test: SpectralCube) -> float:
    """Peak signal-to-noise ratio in dB with peak 1, over the whole cube.

    The MSE is accumulated in double precision across all B*H*W entries.
    Identical cubes give +infinity.
    """
    _check_dims(reference, test)
    diff = reference.data.astype(np.float64) - test.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def band_psnrs(reference: SpectralCube, test: SpectralCube) -> list[float]:
    """Per-band PSNR values (the alternative, per-band-average convention)."""
    _check_dims(reference, test)
    out = []
    for b in range(reference.bands):
        diff = reference.data[b].astype(np.float64) - test.data[b].astype(np.float64)
        mse = float(np.mean(diff * diff))
        out.append(math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse))
    return out
