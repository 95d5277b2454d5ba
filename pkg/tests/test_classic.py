"""Bilinear and PPI-difference demosaickers against brute-force oracles."""

import numpy as np
import pytest

from msdemosaic import (
    DegeneratePatternError,
    MosaicImage,
    MsfaPattern,
    SpectralCube,
    TriangleKernel,
    apply_msfa,
    band_mask,
    bilinear_demosaic,
    default_pattern,
    ppi_demosaic,
    ppi_estimate,
)
from helpers import bilinear_oracle, ppi_demosaic_oracle, ppi_oracle, random_cube


def mosaic_of(cube, pattern=None):
    return apply_msfa(cube, pattern or default_pattern())


class TestTriangleKernel:
    def test_period4_taps(self):
        taps = TriangleKernel(4).weights
        np.testing.assert_allclose(taps, np.array([1, 2, 3, 4, 3, 2, 1]) / 4.0)

    def test_center_is_one_and_symmetric(self):
        for p in (1, 2, 4, 5):
            taps = TriangleKernel(p).weights
            assert len(taps) == 2 * p - 1
            assert taps[p - 1] == 1.0
            np.testing.assert_array_equal(taps, taps[::-1])


class TestBilinear:
    def test_constant_preserved_everywhere(self):
        cube = SpectralCube(np.full((16, 11, 13), 0.6))
        out = bilinear_demosaic(mosaic_of(cube))
        np.testing.assert_allclose(out.data, 0.6, rtol=0, atol=1e-12)

    def test_linear_ramp_between_samples(self):
        # every band holds the same column ramp x/4, so band 0's samples at
        # columns 0 and 4 are 0 and 1; interior columns interpolate linearly
        ramp = np.tile(np.arange(8) / 4.0, (8, 1))
        cube = SpectralCube(np.broadcast_to(ramp, (16, 8, 8)).copy())
        out = bilinear_demosaic(mosaic_of(cube))
        np.testing.assert_allclose(out.data[0, 0, 1:4], [0.25, 0.5, 0.75], atol=1e-12)

    def test_matches_window_oracle(self):
        cube = random_cube(16, 16, 16, seed=21)
        mosaic = mosaic_of(cube)
        out = bilinear_demosaic(mosaic)
        assert np.abs(out.data - bilinear_oracle(mosaic)).max() < 1e-10

    def test_sample_position_fidelity(self):
        for dtype, tol in ((np.float32, 1e-6), (np.float64, 1e-12)):
            cube = random_cube(16, 12, 12, seed=22, dtype=dtype)
            mosaic = mosaic_of(cube)
            out = bilinear_demosaic(mosaic)
            for b in range(16):
                flags = band_mask(mosaic.pattern, b, 12, 12).flags
                err = np.abs(out.data[b][flags] - mosaic.samples[flags]).max()
                assert err < tol

    def test_linearity(self):
        pattern = default_pattern()
        a = mosaic_of(random_cube(16, 12, 12, seed=23, dtype=np.float32))
        b = mosaic_of(random_cube(16, 12, 12, seed=24, dtype=np.float32))
        mixed = MosaicImage(0.7 * a.samples + 0.3 * b.samples, pattern)
        lhs = bilinear_demosaic(mixed).data
        rhs = 0.7 * bilinear_demosaic(a).data + 0.3 * bilinear_demosaic(b).data
        assert np.abs(lhs - rhs).max() < 1e-6

    def test_exact_on_per_band_piecewise_linear(self):
        # each band is separably piecewise linear with knots on its own lattice
        rng = np.random.default_rng(25)
        pattern = default_pattern()
        h = w = 16
        planes = []
        for b in range(16):
            oy, ox = divmod(b, 4)
            knots_y = np.arange(oy, h, 4)
            knots_x = np.arange(ox, w, 4)
            values = rng.random((len(knots_y), len(knots_x)))
            rows = np.empty((len(knots_y), w))
            for i in range(len(knots_y)):
                rows[i] = np.interp(np.arange(w), knots_x, values[i])
            plane = np.empty((h, w))
            for x in range(w):
                plane[:, x] = np.interp(np.arange(h), knots_y, rows[:, x])
            planes.append(plane)
        cube = SpectralCube(np.stack(planes))
        out = bilinear_demosaic(mosaic_of(cube))
        for b in range(16):
            oy, ox = divmod(b, 4)
            sl = (slice(oy, oy + 13), slice(ox, ox + 13))  # bracketed interior
            err = np.abs(out.data[b][sl] - cube.data[b][sl]).max()
            assert err < 1e-5

    def test_deterministic(self):
        cube = random_cube(16, 12, 12, seed=26, dtype=np.float32)
        mosaic = mosaic_of(cube)
        first = bilinear_demosaic(mosaic)
        second = bilinear_demosaic(mosaic)
        np.testing.assert_array_equal(first.data, second.data)

    def test_degenerate_pattern_names_pixel_and_band(self):
        # band 1 never appears in this pattern
        pattern = MsfaPattern(np.zeros((4, 4), dtype=np.int64), 2)
        cube = random_cube(2, 8, 8, seed=27)
        with pytest.raises(DegeneratePatternError, match=r"band 1 .*\(0, 0\)"):
            bilinear_demosaic(apply_msfa(cube, pattern))


class TestPpiEstimate:
    def test_constant_mosaic(self):
        cube = SpectralCube(np.full((16, 9, 10), 0.42))
        plane = ppi_estimate(mosaic_of(cube))
        np.testing.assert_allclose(plane, 0.42, atol=1e-12)

    def test_equal_band_constant_cube(self):
        cube = SpectralCube(np.full((16, 8, 8), 0.7))
        plane = ppi_estimate(mosaic_of(cube))
        np.testing.assert_allclose(plane, 0.7, atol=1e-12)

    def test_interior_equals_band_mean_for_flat_bands(self):
        values = np.linspace(0.1, 0.9, 16)
        cube = SpectralCube(np.broadcast_to(values[:, None, None], (16, 12, 12)).copy())
        plane = ppi_estimate(mosaic_of(cube))
        np.testing.assert_allclose(plane[2:-2, 2:-2], values.mean(), atol=1e-12)

    def test_matches_window_oracle(self):
        cube = random_cube(16, 16, 16, seed=28)
        mosaic = mosaic_of(cube)
        assert np.abs(ppi_estimate(mosaic) - ppi_oracle(mosaic)).max() < 1e-10

    def test_unsupported_period(self):
        pattern = MsfaPattern(np.array([[0, 1], [2, 3]]), 4)
        cube = random_cube(4, 8, 8, seed=29)
        with pytest.raises(ValueError, match="period 4"):
            ppi_estimate(apply_msfa(cube, pattern))


class TestPpiDemosaic:
    def test_constant_cube_exact(self):
        cube = SpectralCube(np.full((16, 12, 12), 0.55))
        out = ppi_demosaic(mosaic_of(cube))
        np.testing.assert_allclose(out.data, 0.55, atol=1e-12)

    def test_flat_bands_exact_in_interior(self):
        # Border renormalization makes the PPI plane vary near edges, so exact
        # per-band recovery holds where both filter windows are complete.
        values = np.linspace(0.1, 0.9, 16)
        cube = SpectralCube(np.broadcast_to(values[:, None, None], (16, 16, 16)).copy())
        out = ppi_demosaic(mosaic_of(cube))
        interior = (slice(None), slice(5, 11), slice(5, 11))
        np.testing.assert_allclose(out.data[interior], cube.data[interior], atol=1e-12)
        # full-plane error stays well below the spectral spread
        assert np.abs(out.data - cube.data).max() < 0.25 * (values.max() - values.min())

    def test_matches_pipeline_oracle(self):
        cube = random_cube(16, 16, 16, seed=30)
        mosaic = mosaic_of(cube)
        out = ppi_demosaic(mosaic)
        assert np.abs(out.data - ppi_demosaic_oracle(mosaic)).max() < 1e-10

    def test_deterministic(self):
        cube = random_cube(16, 12, 12, seed=31, dtype=np.float32)
        mosaic = mosaic_of(cube)
        np.testing.assert_array_equal(ppi_demosaic(mosaic).data, ppi_demosaic(mosaic).data)
