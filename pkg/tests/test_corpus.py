"""Tests for corpus generation, including the power-law resolution sweep."""

import math

import numpy as np
import pytest

from mildns.corpus import (
    FAMILIES,
    CorpusSpec,
    dilate_field,
    generate_corpus,
    power_law_profile,
    random_scalar_field,
    single_mode,
)
from mildns.errors import ParameterError
from mildns.lorentz_norms import besov_norm_heat, lebesgue_norm
from mildns.spectral_field import SpectralGrid, max_divergence, to_physical


def test_single_mode_is_shear(grid16):
    u = single_mode(grid16, (0, 1))
    x = grid16.coordinates()
    samples = to_physical(u)
    assert np.max(np.abs(samples[0] - np.sin(x[1]))) < 1e-14
    assert np.max(np.abs(samples[1])) < 1e-14
    assert u.divergence_free


def test_single_mode_3d(grid3d):
    u = single_mode(grid3d, (1, 2, 0), amplitude=2.0)
    assert max_divergence(u) < 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_families_are_zero_mean_and_divergence_free(grid32, family):
    fields = generate_corpus(CorpusSpec(family, count=3, seed=7, exponent=0.5), grid32)
    assert len(fields) == 3
    for u in fields:
        scale = float(np.max(np.abs(u.coeffs)))
        assert u.divergence_free
        assert np.all(np.abs(u.zero_mode) <= 1e-12 * scale)
        assert max_divergence(u) <= 1e-10 * scale


@pytest.mark.parametrize("family", FAMILIES)
def test_same_seed_same_corpus(grid16, family):
    spec = CorpusSpec(family, count=2, seed=3)
    first, second = generate_corpus(spec, grid16), generate_corpus(spec, grid16)
    assert all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(first, second))


def test_different_seed_different_corpus(grid16):
    a = generate_corpus(CorpusSpec("random_band_limited", seed=1), grid16)[0]
    b = generate_corpus(CorpusSpec("random_band_limited", seed=2), grid16)[0]
    assert not np.array_equal(a.coeffs, b.coeffs)


def test_random_fields_are_resolution_independent():
    coarse, fine = SpectralGrid(2, 32), SpectralGrid(2, 64)
    spec = CorpusSpec("random_band_limited", seed=5)
    u32 = to_physical(generate_corpus(spec, coarse)[0])
    u64 = to_physical(generate_corpus(spec, fine)[0])
    assert np.max(np.abs(u64[:, ::2, ::2] - u32)) < 1e-12


def test_rms_amplitude(grid32):
    u = generate_corpus(CorpusSpec("random_band_limited", amplitude=0.3), grid32)[0]
    rms = lebesgue_norm(u, 2) / math.sqrt(grid32.volume)
    assert rms == pytest.approx(0.3, rel=1e-12)


def test_mode_beyond_dealiased_range(grid16):
    with pytest.raises(ParameterError, match="dealiased range"):
        single_mode(grid16, (0, 6))
    with pytest.raises(ParameterError):
        random_scalar_field(grid16, np.random.default_rng(0), band=(1, 6))


def test_spec_validation():
    with pytest.raises(ParameterError, match="Unknown corpus family"):
        CorpusSpec("vortex_sheet")
    with pytest.raises(ParameterError):
        CorpusSpec("random_band_limited", band=(3, 2))


def test_dilation_of_single_mode(grid16):
    dilated = dilate_field(single_mode(grid16, (0, 1)), 2)
    expected = single_mode(grid16, (0, 2), amplitude=2.0)
    assert np.allclose(dilated.coeffs, expected.coeffs, rtol=0, atol=1e-15)


def test_dilation_preserves_lebesgue_norm_scaling(grid32):
    u = generate_corpus(CorpusSpec("random_band_limited", band=(1, 3)), grid32)[0]
    # ||m u(m.)||_{L^q(torus)} = m ||u||_{L^q(torus)}
    assert lebesgue_norm(dilate_field(u, 2), 4.0) == pytest.approx(2 * lebesgue_norm(u, 4.0), rel=1e-12)


def test_dilation_rejects_unresolvable(grid16):
    u = single_mode(grid16, (0, 3))
    with pytest.raises(ParameterError):
        dilate_field(u, 2)


def test_power_law_exponent_range(grid16):
    with pytest.raises(ParameterError):
        power_law_profile(grid16, 2.0)


@pytest.mark.parametrize("n", [32, 64])
def test_power_law_singular_cell_is_exact_average(n):
    grid = SpectralGrid(2, n)
    h = grid.box_length / n
    samples = to_physical(power_law_profile(grid, 1.0))
    # mean of 1/|x| over the h-square: (2/h) * 2 asinh(1)
    expected = 4 * math.asinh(1.0) / h - 1.0 / h
    assert samples[n // 2, n // 2] - samples[n // 2 + 1, n // 2] == pytest.approx(expected, rel=1e-7)


class TestPowerLawSweep:
    """|x|^{-d/q} with q = 3, d = 2 is not in L^3 but lies in the negative-order Besov space."""

    RESOLUTIONS = (32, 64, 128, 256)

    @pytest.fixture(scope="class")
    def profiles(self):
        return [power_law_profile(SpectralGrid(2, n), 2.0 / 3.0) for n in self.RESOLUTIONS]

    def test_lebesgue_norm_grows_logarithmically(self, profiles):
        cubes = [lebesgue_norm(phi, 3.0) ** 3 for phi in profiles]
        assert all(b > a for a, b in zip(cubes, cubes[1:]))
        increments = np.diff(cubes)
        # the singular part of int |x|^{-2} gains 2 pi ln 2 per halving of the cell size
        assert np.allclose(increments, 2 * math.pi * math.log(2), rtol=0.1)

    def test_besov_norm_is_stable(self, profiles):
        values = [besov_norm_heat(phi, 2.0 / 4.0 - 2.0 / 3.0, math.inf, 4.0) for phi in profiles]
        assert max(values) / min(values) < 1.05
