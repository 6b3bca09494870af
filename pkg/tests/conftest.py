"""Shared grids, random fields and solver settings for the test suite."""

import math

import numpy as np
import pytest
from hypothesis import assume, strategies as st
from hypothesis.extra.numpy import arrays

from mildns.corpus import random_scalar_field, random_vector_field, single_mode
from mildns.spectral_field import ScalarField, SpectralGrid, VectorField, from_physical, vector_from_physical


@pytest.fixture
def grid16():
    return SpectralGrid(2, 16)


@pytest.fixture
def grid32():
    return SpectralGrid(2, 32)


@pytest.fixture
def grid3d():
    return SpectralGrid(3, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rough_scalar(grid, seed, zero_mean=True):
    """Scalar field with i.i.d. normal samples (every mode populated)."""
    samples = np.random.default_rng(seed).standard_normal(grid.shape)
    if zero_mean:
        samples -= samples.mean()
    return from_physical(samples, grid)


def rough_vector(grid, seed):
    samples = np.random.default_rng(seed).standard_normal((grid.dim,) + grid.shape)
    samples -= samples.mean(axis=tuple(range(1, grid.dim + 1)), keepdims=True)
    return vector_from_physical(samples, grid)


def smooth_scalar(grid, seed, band=(1, 4)):
    return random_scalar_field(grid, np.random.default_rng(seed), band)


def smooth_vector(grid, seed, band=(1, 4), amplitude=1.0):
    return random_vector_field(grid, np.random.default_rng(seed), band, amplitude)


@pytest.fixture
def shear(grid16):
    """(sin x_2, 0) on the 2 pi box."""
    return single_mode(grid16, (0, 1))


unit_floats = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False,
                        allow_subnormal=False)


@st.composite
def zero_mean_samples(draw, shape):
    """Random physical samples with their mean removed; constant draws are rejected."""
    samples = draw(arrays(np.float64, shape, elements=unit_floats))
    assume(np.ptp(samples) > 1e-3)
    return samples - samples.mean()


def zero_mean_scalar(samples, grid):
    """Scalar field of the samples with the zero mode set exactly to 0."""
    coeffs = np.array(from_physical(samples, grid).coeffs)
    coeffs[(0,) * grid.dim] = 0.0
    return ScalarField(grid, coeffs)


def zero_mean_vector(samples, grid):
    coeffs = np.array(vector_from_physical(samples, grid).coeffs)
    coeffs[(slice(None),) + (0,) * grid.dim] = 0.0
    return VectorField(grid, coeffs)


def max_abs(a):
    return float(np.max(np.abs(a)))


def relative(a, b):
    return max_abs(a - b) / max(max_abs(b), math.ulp(1.0))
