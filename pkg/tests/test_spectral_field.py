"""
Tests for the spectral field layer.

Validates:
- Grid validation and the coefficient convention
- Leray projection, heat semigroup and Lambda^s identities
- Riesz transforms and potentials
- 2/3-rule products, including inputs with modes outside the band
- Field invariants (read-only storage, grid checks, divergence flag)
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import fft

from conftest import (
    max_abs,
    relative,
    rough_scalar,
    rough_vector,
    smooth_scalar,
    smooth_vector,
    zero_mean_samples,
    zero_mean_scalar,
    zero_mean_vector,
)
from mildns.errors import DivergenceError, GridMismatchError, ParameterError, ZeroModeError
from mildns.spectral_field import (
    ScalarField,
    SpectralGrid,
    TensorField,
    VectorField,
    divergence,
    divergence_tensor,
    dump_spectral,
    fractional_laplacian,
    from_physical,
    gradient,
    heat_propagate,
    hermitian_symmetrize,
    leray_project,
    load_spectral,
    max_divergence,
    pointwise_product,
    riesz_potential,
    riesz_transform,
    tensor_product,
    to_physical,
    vector_from_physical,
)


class TestSpectralGrid:
    def test_shapes(self, grid16, grid3d):
        assert grid16.shape == (16, 16)
        assert grid16.lattice_indices.shape == (2, 16, 16)
        assert grid3d.k_squared.shape == (16, 16, 16)
        assert grid16.cell_volume == pytest.approx((2 * math.pi / 16) ** 2)

    @pytest.mark.parametrize("dim, n", [(1, 16), (4, 8), (2, 15), (2, 0)])
    def test_rejects_bad_discretization(self, dim, n):
        with pytest.raises(ParameterError):
            SpectralGrid(dim, n)

    def test_dealias_mask_keeps_two_thirds(self, grid16):
        kept = grid16.lattice_indices[0][grid16.dealias_mask]
        assert kept.max() == 5 and kept.min() == -5

    def test_nyquist_rows_have_zero_odd_wavenumber(self, grid16):
        assert np.all(grid16.odd_wavenumbers[0][8] == 0.0)


class TestTransforms:
    def test_coefficient_convention(self, grid16):
        x = grid16.coordinates()
        f = from_physical(np.sin(x[0]), grid16)
        assert f.coeffs[1, 0] == pytest.approx(-0.5j, abs=1e-15)
        assert f.coeffs[-1, 0] == pytest.approx(0.5j, abs=1e-15)
        assert from_physical(np.full(grid16.shape, 3.0), grid16).zero_mode == pytest.approx(3.0)

    def test_physical_round_trip(self, grid16):
        samples = np.random.default_rng(0).standard_normal(grid16.shape)
        assert max_abs(to_physical(from_physical(samples, grid16)) - samples) < 1e-14

    def test_hermitian_symmetrize_keeps_real_field(self, grid16):
        f = rough_scalar(grid16, 1)
        assert relative(hermitian_symmetrize(f.coeffs, grid16), f.coeffs) < 1e-14

    def test_sample_shape_mismatch(self, grid16):
        with pytest.raises(GridMismatchError):
            from_physical(np.zeros((8, 8)), grid16)


GRID = SpectralGrid(2, 16)
scalar_samples = zero_mean_samples(GRID.shape)
vector_samples = zero_mean_samples((2,) + GRID.shape)
orders = st.floats(min_value=-1.5, max_value=1.5, allow_nan=False)
times = st.floats(min_value=0.0, max_value=0.5, allow_nan=False)


def _imaginary_part(f):
    return fft.ifftn(f.coeffs, axes=f.grid.axes, norm="forward").imag


def _energy(f):
    return float(np.sum(np.abs(f.coeffs) ** 2))


class TestOperatorIdentities:
    @given(samples=vector_samples)
    @settings(max_examples=100, deadline=None)
    def test_leray_idempotent(self, samples):
        once = leray_project(zero_mean_vector(samples, GRID))
        twice = leray_project(once)
        assert relative(twice.coeffs, once.coeffs) < 1e-12

    @given(samples=vector_samples)
    @settings(max_examples=100, deadline=None)
    def test_leray_annihilates_divergence(self, samples):
        u = zero_mean_vector(samples, GRID)
        assert max_divergence(leray_project(u)) <= 1e-10 * max_abs(u.coeffs)

    def test_leray_3d(self, grid3d):
        u = leray_project(rough_vector(grid3d, 7))
        assert u.divergence_free
        assert max_divergence(u) <= 1e-12 * float(np.max(grid3d.k_abs)) * max_abs(u.coeffs)

    def test_leray_removes_gradients(self, grid16):
        phi = smooth_scalar(grid16, 3)
        assert max_abs(leray_project(gradient(phi)).coeffs) < 1e-13

    def test_leray_fixes_shear(self, shear):
        assert relative(leray_project(shear).coeffs, shear.coeffs) < 1e-12

    def test_leray_single_mode(self, grid16):
        coeffs = np.zeros((2,) + grid16.shape, dtype=complex)
        coeffs[0, 1, 1] = coeffs[0, -1, -1] = 1.0
        projected = leray_project(VectorField(grid16, coeffs)).coeffs
        assert np.allclose(projected[:, 1, 1], [0.5, -0.5], rtol=0.0, atol=1e-15)

    @given(samples=scalar_samples, t1=times, t2=times)
    @settings(max_examples=100, deadline=None)
    def test_heat_semigroup(self, samples, t1, t2):
        f = zero_mean_scalar(samples, GRID)
        composed = heat_propagate(heat_propagate(f, t1), t2)
        assert relative(composed.coeffs, heat_propagate(f, t1 + t2).coeffs) < 1e-12

    @given(samples=scalar_samples, t=times)
    @settings(max_examples=100, deadline=None)
    def test_heat_contracts_l2(self, samples, t):
        f = zero_mean_scalar(samples, GRID)
        assert _energy(heat_propagate(f, t)) <= _energy(f) * (1 + 1e-12)

    def test_heat_single_mode(self, grid16):
        x = grid16.coordinates()
        f = heat_propagate(from_physical(np.cos(x[0]), grid16), 0.5)
        assert f.coeffs[1, 0].real == pytest.approx(0.5 * 0.6065306597, rel=1e-10)

    def test_heat_gaussian_matches_periodic_images(self):
        grid = SpectralGrid(2, 128)
        x = grid.coordinates()
        center, width, t = math.pi, 0.4, 0.05

        def images(variance):
            total = np.zeros(grid.shape)
            for j1 in (-1, 0, 1):
                for j2 in (-1, 0, 1):
                    r2 = (x[0] - center - j1 * grid.box_length) ** 2 + (x[1] - center - j2 * grid.box_length) ** 2
                    total += np.exp(-r2 / (2 * variance))
            return total * width ** 2 / variance

        flowed = to_physical(heat_propagate(from_physical(images(width ** 2), grid), t))
        error = math.sqrt(float(np.sum((flowed - images(width ** 2 + 2 * t)) ** 2)) * grid.cell_volume)
        assert error <= 1e-6

    def test_heat_rejects_negative_time(self, grid16):
        with pytest.raises(ParameterError):
            heat_propagate(rough_scalar(grid16, 0), -1.0)

    @given(samples=scalar_samples, s1=orders, s2=orders)
    @settings(max_examples=100, deadline=None)
    def test_fractional_laplacian_composition(self, samples, s1, s2):
        f = zero_mean_scalar(samples, GRID)
        composed = fractional_laplacian(fractional_laplacian(f, s2), s1)
        assert relative(composed.coeffs, fractional_laplacian(f, s1 + s2).coeffs) < 1e-12

    @given(samples=scalar_samples, s=st.floats(min_value=0.1, max_value=1.5))
    @settings(max_examples=100, deadline=None)
    def test_fractional_laplacian_inverse_keeps_nyquist(self, samples, s):
        f = zero_mean_scalar(samples, GRID)
        back = fractional_laplacian(fractional_laplacian(f, -s), s)
        assert relative(back.coeffs, f.coeffs) < 1e-12

    def test_fractional_laplacian_acts_on_nyquist_rows(self, grid16):
        f = rough_scalar(grid16, 4)
        scaled = fractional_laplacian(f, 1.0)
        assert scaled.coeffs[8, 0] == pytest.approx(8.0 * f.coeffs[8, 0], rel=1e-14)

    def test_fractional_laplacian_doubles_mode_two(self, grid16):
        x = grid16.coordinates()
        f = from_physical(np.cos(2 * x[0]), grid16)
        assert fractional_laplacian(f, 1.0).coeffs[2, 0].real == pytest.approx(1.0, rel=1e-14)

    def test_two_is_minus_laplacian(self, grid16):
        f = smooth_scalar(grid16, 4)
        minus_laplacian = -divergence(gradient(f))
        assert relative(fractional_laplacian(f, 2.0).coeffs, minus_laplacian.coeffs) < 1e-12

    def test_negative_order_needs_zero_mean(self, grid16):
        f = rough_scalar(grid16, 0, zero_mean=False)
        with pytest.raises(ZeroModeError):
            fractional_laplacian(f, -0.5)

    def test_riesz_single_mode(self, grid16):
        coeffs = np.zeros(grid16.shape, dtype=complex)
        coeffs[1, 0] = 1.0
        f = ScalarField(grid16, coeffs)
        assert riesz_transform(f, 0).coeffs[1, 0] == pytest.approx(1j)
        assert max_abs(riesz_transform(f, 1).coeffs) == 0.0

    @given(samples=scalar_samples)
    @settings(max_examples=100, deadline=None)
    def test_riesz_output_is_real(self, samples):
        f = zero_mean_scalar(samples, GRID)
        for j in range(2):
            assert max_abs(_imaginary_part(riesz_transform(f, j))) <= 1e-12 * max_abs(samples)

    def test_riesz_transforms_sum_to_minus_identity(self, grid16):
        f = smooth_scalar(grid16, 5)
        total = riesz_transform(riesz_transform(f, 0), 0) + riesz_transform(riesz_transform(f, 1), 1)
        assert relative((-total).coeffs, f.coeffs) < 1e-12

    def test_riesz_potential_constant(self, grid16):
        f = smooth_scalar(grid16, 6)
        # d = 2, s = 1: pi * 2 * Gamma(1/2) / Gamma(1/2)
        expected = 2 * math.pi * fractional_laplacian(f, -1.0).coeffs
        assert relative(riesz_potential(f, 1.0).coeffs, expected) < 1e-12

    def test_riesz_potential_range(self, grid16):
        with pytest.raises(ParameterError):
            riesz_potential(smooth_scalar(grid16, 0), 2.0)


class TestProducts:
    def test_resolved_product_is_exact(self, grid16):
        x = grid16.coordinates()[0]
        f = from_physical(np.cos(x), grid16)
        expected = 0.5 + 0.5 * np.cos(2 * x)
        assert max_abs(to_physical(pointwise_product(f, f)) - expected) < 1e-14

    def test_unresolved_product_modes_are_truncated(self, grid16):
        x = grid16.coordinates()[0]
        f = from_physical(np.cos(3 * x), grid16)
        assert max_abs(to_physical(pointwise_product(f, f)) - 0.5) < 1e-14

    def test_high_input_modes_do_not_fold_back(self, grid16):
        x = grid16.coordinates()
        u = vector_from_physical(np.stack([np.cos(6 * x[1]), np.zeros(grid16.shape)]), grid16)
        F = tensor_product(u, u)
        assert abs(F.coeffs[0, 0, 0, 4]) < 1e-12
        assert max_abs(F.coeffs) < 1e-12

    def test_product_ignores_inputs_outside_band(self, grid16):
        x = grid16.coordinates()[0]
        f = from_physical(np.cos(2 * x) + np.cos(7 * x), grid16)
        expected = 0.5 + 0.5 * np.cos(4 * x)
        assert max_abs(to_physical(pointwise_product(f, f)) - expected) < 1e-14

    def test_grid_mismatch(self, grid16, grid32):
        with pytest.raises(GridMismatchError):
            pointwise_product(rough_scalar(grid16, 0), rough_scalar(grid32, 0))

    def test_tensor_entries_are_scalar_products(self, grid16):
        u = smooth_vector(grid16, 1, band=(1, 2))
        v = smooth_vector(grid16, 2, band=(1, 2))
        F = tensor_product(u, v)
        assert F.coeffs.shape == (2, 2, 16, 16)
        expected = pointwise_product(u.components[0], v.components[1])
        assert relative(F.components[0][1].coeffs, expected.coeffs) < 1e-12

    @given(a=vector_samples, b=vector_samples)
    @settings(max_examples=100, deadline=None)
    def test_tensor_product_transposes(self, a, b):
        u, v = zero_mean_vector(a, GRID), zero_mean_vector(b, GRID)
        uv = tensor_product(u, v).coeffs
        vu = tensor_product(v, u).coeffs
        assert relative(uv, np.swapaxes(vu, 0, 1)) < 1e-12

    def test_zero_factor_gives_zero_tensor(self, grid16):
        F = tensor_product(smooth_vector(grid16, 1), VectorField.zeros(grid16))
        assert max_abs(F.coeffs) == 0.0

    def test_shear_self_product(self, shear):
        x2 = shear.grid.coordinates()[1]
        F = tensor_product(shear, shear)
        assert max_abs(to_physical(F.components[0][0]) - (0.5 - 0.5 * np.cos(2 * x2))) < 1e-14
        for i, j in ((0, 1), (1, 0), (1, 1)):
            assert max_abs(F.coeffs[i, j]) < 1e-15
        assert max_abs(divergence_tensor(F).coeffs) < 1e-14

    def test_divergence_of_self_product_is_advection(self, grid16):
        u = smooth_vector(grid16, 3, band=(1, 2))
        div = divergence_tensor(tensor_product(u, u))
        for i, ui in enumerate(u.components):
            grad = gradient(ui).components
            advection = pointwise_product(u.components[0], grad[0]) + pointwise_product(u.components[1], grad[1])
            assert relative(div.components[i].coeffs, advection.coeffs) < 1e-10

    def test_divergence_of_constant_tensor(self, grid16):
        coeffs = np.zeros((2, 2) + grid16.shape, dtype=complex)
        coeffs[:, :, 0, 0] = [[1.0, -2.0], [0.5, 3.0]]
        assert max_abs(divergence_tensor(TensorField(grid16, coeffs)).coeffs) == 0.0

    def test_divergence_of_single_mode_tensor(self, grid16):
        coeffs = np.zeros((2, 2) + grid16.shape, dtype=complex)
        coeffs[0, 1, 0, 1] = 1.0
        div = np.array(divergence_tensor(TensorField(grid16, coeffs)).coeffs)
        assert div[0, 0, 1] == pytest.approx(1j)
        div[0, 0, 1] = 0.0
        assert max_abs(div) == 0.0


class TestFieldInvariants:
    def test_coefficients_read_only(self, grid16):
        f = rough_scalar(grid16, 0)
        with pytest.raises(ValueError):
            f.coeffs[0, 0] = 1.0

    def test_operators_do_not_modify_inputs(self, grid16):
        u = rough_vector(grid16, 0)
        before = u.coeffs.copy()
        leray_project(u)
        heat_propagate(u, 0.5)
        assert np.array_equal(u.coeffs, before)

    def test_divergence_flag_is_checked(self, grid16):
        u = rough_vector(grid16, 0)
        with pytest.raises(DivergenceError):
            VectorField(grid16, u.coeffs, divergence_free=True)

    def test_arithmetic_requires_same_grid(self, grid16, grid32):
        with pytest.raises(GridMismatchError):
            rough_vector(grid16, 0) + rough_vector(grid32, 0)

    def test_component_count(self, grid16):
        c = rough_scalar(grid16, 0)
        with pytest.raises(GridMismatchError):
            VectorField.from_components([c, c, c])

    def test_scalar_shape(self, grid16):
        with pytest.raises(GridMismatchError):
            ScalarField(grid16, np.zeros((16, 8)))


def test_spectral_dump_round_trip(tmp_path, grid16):
    u = leray_project(rough_vector(grid16, 9))
    path = tmp_path / "field.txt"
    dump_spectral(u, path)
    loaded = load_spectral(path, divergence_free=True)
    assert loaded.grid == grid16
    assert np.array_equal(loaded.coeffs, u.coeffs)
