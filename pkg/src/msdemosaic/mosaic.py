"""Filter-array capture simulation: ideal point sampling of a cube through a pattern."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import MosaicImage, MsfaPattern, SpectralCube

__all__ = ["BandMask", "apply_msfa", "band_mask"]


@dataclass(frozen=True)
class BandMask:
    """H x W boolean plane, true where one band is sampled."""

    flags: np.ndarray

    def __post_init__(self) -> None:
        flags = np.asarray(self.flags, dtype=bool)
        if flags.ndim != 2:
            raise ValueError(f"BandMask.flags must be 2-dimensional, got {flags.shape}")
        flags = flags.view()
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def count(self) -> int:
        return int(self.flags.sum())


def apply_msfa(cube: SpectralCube, pattern: MsfaPattern) -> MosaicImage:
    """Sample one band per pixel: samples(y,x) = cube(pattern cell at (y,x), y, x)."""
    if cube.bands != pattern.band_count:
        raise ValueError(
            f"cube has {cube.bands} bands but pattern expects {pattern.band_count}"
        )
    grid = pattern.band_grid(cube.height, cube.width)
    rows = np.arange(cube.height)[:, None]
    cols = np.arange(cube.width)[None, :]
    return MosaicImage(cube.data[grid, rows, cols], pattern)


def band_mask(pattern: MsfaPattern, band: int, h: int, w: int) -> BandMask:
    """Sampling mask for one band on an h x w plane."""
    if not 0 <= band < pattern.band_count:
        raise IndexError(f"band {band} out of range [0, {pattern.band_count})")
    return BandMask(pattern.band_grid(h, w) == band)
