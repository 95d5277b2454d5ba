"""Shared test fixtures: synthetic cubes and independent brute-force oracles.

The oracles deliberately avoid the library's vectorized machinery: plain
nested loops and direct windowed sums, computed in double precision.
"""

import numpy as np

from msdemosaic import MosaicImage, MsfaPattern, SpectralCube


def random_cube(bands, height, width, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return SpectralCube(rng.random((bands, height, width)).astype(dtype))


def textured_cube(bands=16, height=64, width=64, seed=7, dtype=np.float32):
    """Deterministic grating texture with per-band affine spectral signatures.

    A dominant diagonal sinusoid plus a weak secondary wave, scaled and offset
    differently in every band. High-frequency enough that per-band bilinear
    interpolation leaves substantial, strongly band-correlated error.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = np.sin(2 * np.pi * (0.09 * yy + 0.13 * xx))
    base += 0.15 * np.sin(2 * np.pi * (-0.05 * yy + 0.07 * xx) + 1.0)
    base -= base.min()
    base /= base.max()
    planes = []
    for _ in range(bands):
        gain = rng.uniform(0.55, 0.95)
        offset = rng.uniform(0.0, 1.0 - gain)
        planes.append(offset + gain * base)
    return SpectralCube(np.stack(planes).astype(dtype))


def conv3d_oracle(kernel, bias, x):
    """Direct-summation 3D convolution with zero padding (double precision)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    co, ci, kb, ky, kx = kernel.shape
    _, nb, nh, nw = x.shape
    pb, py, px = (kb - 1) // 2, (ky - 1) // 2, (kx - 1) // 2
    xp = np.pad(x, ((0, 0), (pb, pb), (py, py), (px, px)))
    y = np.zeros((co, nb, nh, nw))
    for o in range(co):
        for b in range(nb):
            for i in range(nh):
                for j in range(nw):
                    acc = bias[o]
                    for c in range(ci):
                        for dz in range(kb):
                            for dy in range(ky):
                                for dx in range(kx):
                                    acc += kernel[o, c, dz, dy, dx] * xp[c, b + dz, i + dy, j + dx]
                    y[o, b, i, j] = acc
    return y


def _triangle_weight(offset, period):
    return max(period - abs(offset), 0) / period


def bilinear_oracle(mosaic: MosaicImage) -> np.ndarray:
    """Windowed weighted average per band with separable triangle weights."""
    pattern = mosaic.pattern
    p = pattern.period
    samples = np.asarray(mosaic.samples, dtype=np.float64)
    h, w = samples.shape
    grid = pattern.band_grid(h, w)
    out = np.zeros((pattern.band_count, h, w))
    for band in range(pattern.band_count):
        for y in range(h):
            for x in range(w):
                num = 0.0
                den = 0.0
                for dy in range(-(p - 1), p):
                    for dx in range(-(p - 1), p):
                        sy, sx = y + dy, x + dx
                        if not (0 <= sy < h and 0 <= sx < w):
                            continue
                        if grid[sy, sx] != band:
                            continue
                        weight = _triangle_weight(dy, p) * _triangle_weight(dx, p)
                        num += weight * samples[sy, sx]
                        den += weight
                out[band, y, x] = num / den
    return out


_PPI_TAPS = {-2: 1 / 8, -1: 2 / 8, 0: 2 / 8, 1: 2 / 8, 2: 1 / 8}


def ppi_oracle(mosaic: MosaicImage) -> np.ndarray:
    """Windowed [1,2,2,2,1]/8 weighted average, renormalized at borders."""
    samples = np.asarray(mosaic.samples, dtype=np.float64)
    h, w = samples.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            num = 0.0
            den = 0.0
            for dy, wy in _PPI_TAPS.items():
                for dx, wx in _PPI_TAPS.items():
                    sy, sx = y + dy, x + dx
                    if not (0 <= sy < h and 0 <= sx < w):
                        continue
                    num += wy * wx * samples[sy, sx]
                    den += wy * wx
            out[y, x] = num / den
    return out


def ppi_demosaic_oracle(mosaic: MosaicImage) -> np.ndarray:
    """Compose the PPI oracle with masked triangle interpolation of differences."""
    pattern = mosaic.pattern
    ppi = ppi_oracle(mosaic)
    samples = np.asarray(mosaic.samples, dtype=np.float64)
    h, w = samples.shape
    diff_mosaic = MosaicImage(samples - ppi, pattern)
    interp = bilinear_oracle(diff_mosaic)
    return ppi[None, :, :] + interp


def relu_oracle(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def oracle_network_refined(config, params, initial: SpectralCube) -> np.ndarray:
    """Chain the brute-force layer oracles end to end in double precision."""
    h = np.asarray(initial.data, dtype=np.float64)[None]
    for mp in params.modules:
        z = conv3d_oracle(mp.main.kernel, mp.main.bias, h)
        if mp.proj is None:
            h = relu_oracle(z)
        elif config.relu_placement == "before-add":
            h = relu_oracle(z) + conv3d_oracle(mp.proj.kernel, mp.proj.bias, h)
        else:
            h = relu_oracle(z + conv3d_oracle(mp.proj.kernel, mp.proj.bias, h))
    residual = conv3d_oracle(params.combiner.kernel, params.combiner.bias, h)[0]
    if config.longest_shortcut:
        return np.asarray(initial.data, dtype=np.float64) + residual
    return residual


def fd_gradient(func, arr, step=1e-5):
    """Central finite differences of a scalar function over every array entry."""
    arr = np.asarray(arr, dtype=np.float64)
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        plus = func(arr)
        arr[idx] = orig - step
        minus = func(arr)
        arr[idx] = orig
        grad[idx] = (plus - minus) / (2.0 * step)
        it.iternext()
    return grad


def max_relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def checkerboard_pattern(period, band_count):
    """A valid pattern that never samples some bands (degenerate on purpose)."""
    cells = np.zeros((period, period), dtype=np.int64)
    return MsfaPattern(cells, band_count)
