"""Core data model: spectral cubes, filter-array patterns, mosaics, feature tensors.

Cube data is addressed ``(band, row, col)`` and holds normalized intensities
with a nominal range of [0, 1] (derived cubes such as residuals are signed and
may leave it). Two scalar widths are supported throughout the package:
float32 for production paths and float64 for verification paths. All types
are immutable values after construction; the wrapped arrays are marked
read-only, so sharing them across threads is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralCube",
    "MsfaPattern",
    "MosaicImage",
    "FeatureCube",
    "default_pattern",
    "crop",
    "tile",
    "cube_to_features",
    "features_to_cube",
]


def _freeze_float(values, name: str, ndim: int) -> np.ndarray:
    """Return a read-only float32/float64 view of ``values``, validated."""
    arr = np.asarray(values)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if any(n < 1 for n in arr.shape):
        raise ValueError(f"{name} has an empty axis: shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.view()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralCube:
    """Full-resolution multispectral image: B band planes of H x W intensities."""

    data: np.ndarray  # (bands, height, width)

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _freeze_float(self.data, "SpectralCube.data", 3))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def astype(self, dtype) -> "SpectralCube":
        return SpectralCube(self.data.astype(dtype))


@dataclass(frozen=True)
class MsfaPattern:
    """P x P grid of band indices defining one period of the filter array."""

    cells: np.ndarray  # (P, P) ints in [0, band_count)
    band_count: int

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ValueError(f"pattern cells must be a square grid, got shape {cells.shape}")
        if cells.shape[0] < 1:
            raise ValueError("pattern period must be at least 1")
        if not np.issubdtype(cells.dtype, np.integer):
            cells = cells.astype(np.int64)
        if self.band_count < 1:
            raise ValueError(f"band_count must be positive, got {self.band_count}")
        if cells.min() < 0 or cells.max() >= self.band_count:
            raise ValueError(
                f"pattern cells must lie in [0, {self.band_count}), "
                f"got range [{cells.min()}, {cells.max()}]"
            )
        cells = cells.view()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def period(self) -> int:
        return self.cells.shape[0]

    def band_grid(self, height: int, width: int) -> np.ndarray:
        """Band index at every pixel of an H x W plane (the pattern, tiled)."""
        rows = np.arange(height) % self.period
        cols = np.arange(width) % self.period
        return self.cells[rows[:, None], cols[None, :]]


@dataclass(frozen=True)
class MosaicImage:
    """Single plane of raw filter-array samples plus the pattern that produced it."""

    samples: np.ndarray  # (height, width)
    pattern: MsfaPattern

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "samples", _freeze_float(self.samples, "MosaicImage.samples", 2)
        )

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.samples.dtype


@dataclass(frozen=True)
class FeatureCube:
    """4-axis network tensor addressed (channel, band, row, col)."""

    data: np.ndarray  # (channels, bands, height, width)

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _freeze_float(self.data, "FeatureCube.data", 4))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def bands(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype


def default_pattern() -> MsfaPattern:
    """The stock 16-band pattern: band b occupies cell (b // 4, b % 4)."""
    return MsfaPattern(np.arange(16, dtype=np.int64).reshape(4, 4), 16)


def crop(cube: SpectralCube, top: int, left: int, h: int, w: int) -> SpectralCube:
    """Extract the (h, w) rectangle at (top, left) from every band plane."""
    if h < 1 or w < 1:
        raise ValueError(f"crop size must be positive, got h={h}, w={w}")
    if top < 0:
        raise ValueError(f"crop top={top} is negative")
    if left < 0:
        raise ValueError(f"crop left={left} is negative")
    if top + h > cube.height:
        raise ValueError(f"crop bottom edge top+h={top + h} exceeds height={cube.height}")
    if left + w > cube.width:
        raise ValueError(f"crop right edge left+w={left + w} exceeds width={cube.width}")
    return SpectralCube(cube.data[:, top : top + h, left : left + w].copy())


def tile(cube: SpectralCube, grid_rows: int, grid_cols: int) -> list[SpectralCube]:
    """Split into grid_rows x grid_cols disjoint sub-cubes, row-major order."""
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError(f"grid must be positive, got {grid_rows}x{grid_cols}")
    if cube.height % grid_rows or cube.width % grid_cols:
        raise ValueError(
            f"cube dims {cube.height}x{cube.width} not divisible by grid "
            f"{grid_rows}x{grid_cols}"
        )
    th = cube.height // grid_rows
    tw = cube.width // grid_cols
    return [
        crop(cube, r * th, c * tw, th, tw)
        for r in range(grid_rows)
        for c in range(grid_cols)
    ]


def cube_to_features(cube: SpectralCube) -> FeatureCube:
    """Lift a cube into a single-channel feature tensor (the network input)."""
    return FeatureCube(cube.data[None])


def features_to_cube(features: FeatureCube) -> SpectralCube:
    """Inverse of :func:`cube_to_features`; requires exactly one channel."""
    if features.channels != 1:
        raise ValueError(
            f"features_to_cube requires a single channel, got {features.channels}"
        )
    return SpectralCube(features.data[0])
