"""Classical demosaickers: per-band bilinear interpolation and a simplified
pseudo-panchromatic (PPI) difference baseline.

Bilinear interpolation between samples on a period-P lattice is realized as a
separable convolution with a triangular kernel of support 2P-1, normalized
pointwise by the convolved sampling mask. The normalization makes borders
average over the samples actually available, so constants are preserved
exactly everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import MosaicImage, SpectralCube
from .mosaic import band_mask

__all__ = [
    "TriangleKernel",
    "DegeneratePatternError",
    "bilinear_demosaic",
    "ppi_estimate",
    "ppi_demosaic",
]


class DegeneratePatternError(ValueError):
    """A pixel has no in-support sample for some band (pathological pattern)."""


@dataclass(frozen=True)
class TriangleKernel:
    """1D triangle taps t(k) = (p - |k|)/p for |k| < p; width 2p-1, t(0) = 1."""

    period: int
    weights: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.period < 1:
            raise ValueError(f"period must be positive, got {self.period}")
        offsets = np.arange(-(self.period - 1), self.period)
        weights = (self.period - np.abs(offsets)) / self.period
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)


def _filter_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate along one axis with zero padding (taps are symmetric)."""
    radius = len(taps) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad)
    out = np.zeros_like(arr)
    index = [slice(None)] * arr.ndim
    for k, t in enumerate(taps):
        index[axis] = slice(k, k + arr.shape[axis])
        out += t * padded[tuple(index)]
    return out


def _sep_filter(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return _filter_axis(_filter_axis(plane, taps, 0), taps, 1)


def _interp_sparse(
    sparse: np.ndarray, mask: np.ndarray, taps: np.ndarray, band: int
) -> np.ndarray:
    """Mask-normalized separable interpolation of a sparsely sampled plane."""
    num = _sep_filter(sparse, taps)
    den = _sep_filter(mask, taps)
    dead = den <= 0
    if dead.any():
        y, x = np.argwhere(dead)[0]
        raise DegeneratePatternError(
            f"band {band} has no sample within kernel support at pixel ({y}, {x})"
        )
    return num / den


def bilinear_demosaic(mosaic: MosaicImage) -> SpectralCube:
    """Interpolate every band of the mosaic independently.

    Each band's sparse sample plane and its 0/1 mask are convolved with the
    separable triangle kernel for the pattern period; their pointwise ratio is
    the band estimate. Output equals the raw sample at every sampled pixel.
    """
    pattern = mosaic.pattern
    dtype = mosaic.dtype
    taps = TriangleKernel(pattern.period).weights.astype(dtype)
    out = np.empty((pattern.band_count, mosaic.height, mosaic.width), dtype=dtype)
    for b in range(pattern.band_count):
        mask = band_mask(pattern, b, mosaic.height, mosaic.width).flags.astype(dtype)
        out[b] = _interp_sparse(mosaic.samples * mask, mask, taps, b)
    return SpectralCube(out)


_PPI_TAPS = np.array([1.0, 2.0, 2.0, 2.0, 1.0]) / 8.0


def ppi_estimate(mosaic: MosaicImage) -> np.ndarray:
    """Estimate the per-pixel average over all bands directly from the mosaic.

    Separable [1,2,2,2,1]/8 filtering weighs every residue class mod 4 equally
    inside full windows; borders are renormalized by the in-bounds weight sum.
    Only period-4 patterns are supported.
    """
    if mosaic.pattern.period != 4:
        raise ValueError(
            f"ppi_estimate supports period 4 only, got period {mosaic.pattern.period}"
        )
    dtype = mosaic.dtype
    taps = _PPI_TAPS.astype(dtype)
    num = _sep_filter(mosaic.samples, taps)
    den = _sep_filter(np.ones_like(mosaic.samples), taps)
    return num / den


def ppi_demosaic(mosaic: MosaicImage) -> SpectralCube:
    """PPI-difference baseline: interpolate per-band deviations from the PPI.

    For each band, the raw-minus-PPI difference at the band's sampled pixels
    is interpolated with the same triangle machinery as bilinear_demosaic and
    added back onto the PPI plane.
    """
    ppi = ppi_estimate(mosaic)
    pattern = mosaic.pattern
    dtype = mosaic.dtype
    taps = TriangleKernel(pattern.period).weights.astype(dtype)
    out = np.empty((pattern.band_count, mosaic.height, mosaic.width), dtype=dtype)
    for b in range(pattern.band_count):
        mask = band_mask(pattern, b, mosaic.height, mosaic.width).flags.astype(dtype)
        diff = (mosaic.samples - ppi) * mask
        out[b] = ppi + _interp_sparse(diff, mask, taps, b)
    return SpectralCube(out)
