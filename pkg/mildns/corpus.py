"""Deterministic test corpora of divergence-free, zero-mean vector fields.

Random families draw their coefficients over the band's own lattice points,
so the same seed gives the same continuum field at every resolution.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import nquad

from .errors import ParameterError
from .spectral_field import (
    ScalarField,
    SpectralGrid,
    VectorField,
    fractional_laplacian,
    from_physical,
    leray_project,
    vector_from_physical,
)

logger = logging.getLogger(__name__)

FAMILIES = ("single_mode", "gaussian_bump", "random_band_limited",
            "truncated_power_law", "riesz_power_law")


@dataclass(frozen=True)
class CorpusSpec:
    """Which family to draw from and its parameters.

    ``band`` bounds the Euclidean norm of the integer lattice index.
    ``exponent`` is the power of the truncated |x - x0|^{-exponent} profile.
    """

    family: str
    count: int = 1
    seed: int = 0
    mode: Tuple[int, ...] = (0, 1)
    width: float = 0.5
    band: Tuple[int, int] = (1, 4)
    exponent: float = 2.0 / 3.0
    amplitude: float = 1.0
    riesz_order: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"Unknown corpus family: {self.family}")
        if self.count < 1:
            raise ParameterError(f"count must be at least 1, got {self.count}")
        low, high = self.band
        if not 0 < low <= high:
            raise ParameterError(f"band must satisfy 0 < low <= high, got {self.band}")
        if self.width <= 0:
            raise ParameterError(f"width must be positive, got {self.width}")


def _check_resolvable(grid: SpectralGrid, max_index: float, what: str) -> None:
    if max_index >= grid.n_per_axis / 3:
        raise ParameterError(f"{what} reaches lattice index {max_index:g}, beyond the dealiased range "
                             f"|m| < {grid.n_per_axis / 3:.4g} of n={grid.n_per_axis}")


def _place(grid: SpectralGrid, indices: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Array of shape values.shape[:-1] + grid.shape with values at lattice indices."""
    out = np.zeros(values.shape[:-1] + grid.shape, dtype=np.complex128)
    position = tuple((indices % grid.n_per_axis).T)
    out[(Ellipsis,) + position] = values
    return out


def _band_indices(dim: int, band: Tuple[int, int]) -> np.ndarray:
    """Half of the lattice points with low <= |m| <= high (one of each +-m pair)."""
    low, high = band
    points = []
    for m in itertools.product(range(-high, high + 1), repeat=dim):
        norm2 = sum(c * c for c in m)
        if low * low <= norm2 <= high * high and m > tuple(-c for c in m):
            points.append(m)
    return np.array(points, dtype=int).reshape(-1, dim)


def _perpendicular(m: Sequence[int]) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if len(m) == 2:
        pol = np.array([m[1], -m[0]])
    else:
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(m)))] = 1.0
        pol = np.cross(m, axis)
    return pol / np.linalg.norm(pol)


def single_mode(grid: SpectralGrid, mode: Sequence[int], amplitude: float = 1.0) -> VectorField:
    """amplitude * pol * sin(k . x) with pol perpendicular to k = 2 pi m / L.

    mode (0, 1) in 2D gives the shear (sin x_2, 0) on the 2 pi box.
    """
    m = np.asarray(mode, dtype=int)
    if m.shape != (grid.dim,) or not np.any(m):
        raise ParameterError(f"mode must be a nonzero {grid.dim}-vector, got {tuple(mode)}")
    _check_resolvable(grid, float(np.max(np.abs(m))), "mode")
    pol = _perpendicular(m)
    values = np.stack([amplitude * pol * (-0.5j), amplitude * pol * 0.5j], axis=-1)
    coeffs = _place(grid, np.stack([m, -m]), values)
    return VectorField(grid, coeffs, divergence_free=True)


def random_scalar_field(grid: SpectralGrid, rng: np.random.Generator,
                        band: Tuple[int, int] = (1, 4), amplitude: float = 1.0) -> ScalarField:
    """Zero-mean real field with random coefficients on the band and rms amplitude."""
    _check_resolvable(grid, band[1], "band")
    indices = _band_indices(grid.dim, band)
    draws = rng.standard_normal(len(indices)) + 1j * rng.standard_normal(len(indices))
    coeffs = _place(grid, np.concatenate([indices, -indices]),
                    np.concatenate([draws, np.conj(draws)]))
    rms = math.sqrt(float(np.sum(np.abs(coeffs) ** 2)))
    return ScalarField(grid, coeffs * (amplitude / rms))


def random_vector_field(grid: SpectralGrid, rng: np.random.Generator,
                        band: Tuple[int, int] = (1, 4), amplitude: float = 1.0) -> VectorField:
    """Leray projection of a random band-limited field with rms amplitude."""
    _check_resolvable(grid, band[1], "band")
    indices = _band_indices(grid.dim, band)
    shape = (grid.dim, len(indices))
    draws = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coeffs = _place(grid, np.concatenate([indices, -indices]),
                    np.concatenate([draws, np.conj(draws)], axis=-1))
    u = leray_project(VectorField(grid, coeffs))
    return _normalized(u, amplitude)


def _normalized(u: VectorField, amplitude: float) -> VectorField:
    """Scale to root-mean-square |u| = amplitude (Parseval)."""
    rms = math.sqrt(float(np.sum(np.abs(u.coeffs) ** 2)))
    return u if rms == 0 else u * (amplitude / rms)


def _periodic_offsets(grid: SpectralGrid, center: Optional[Sequence[float]]) -> np.ndarray:
    x0 = np.full(grid.dim, grid.box_length / 2) if center is None else np.asarray(center, dtype=float)
    offsets = grid.coordinates() - x0.reshape((-1,) + (1,) * grid.dim)
    return offsets - grid.box_length * np.round(offsets / grid.box_length)


def _smooth_cutoff(r: np.ndarray, radius: float) -> np.ndarray:
    """C^2 bump: 1 for r <= radius/2, 0 for r >= radius."""
    t = np.clip((r - radius / 2) / (radius / 2), 0.0, 1.0)
    return 1.0 - t ** 3 * (10 - 15 * t + 6 * t ** 2)


@lru_cache(maxsize=None)
def _unit_cube_average(dim: int, exponent: float) -> float:
    """Average of |y|^{-a} over [-1, 1]^d.

    Splitting the cube into pyramids over its faces reduces the singular
    integral to d/(d - a) times a smooth one over [0, 1]^{d-1}.
    """
    face, _ = nquad(lambda *y: (1.0 + sum(c * c for c in y)) ** (-exponent / 2), [(0.0, 1.0)] * (dim - 1))
    return dim / (dim - exponent) * face


def power_law_profile(grid: SpectralGrid, exponent: float,
                      center: Optional[Sequence[float]] = None) -> ScalarField:
    """Zero-mean |x - x0|^{-exponent}, cut off smoothly at radius L/4.

    The sample at x0 takes the exact average of the profile over its cell,
    (h/2)^{-a} times the unit-cube average.
    """
    d = grid.dim
    if not 0 < exponent < d:
        raise ParameterError(f"power-law exponent must lie in (0, {d}), got {exponent}")
    r = np.sqrt(np.sum(_periodic_offsets(grid, center) ** 2, axis=0))
    h = grid.box_length / grid.n_per_axis
    singular = (h / 2) ** -exponent * _unit_cube_average(d, float(exponent))
    profile = np.where(r > 0.5 * h, np.maximum(r, 0.5 * h) ** -exponent, singular)
    profile *= _smooth_cutoff(r, grid.box_length / 4)
    profile -= profile.mean()
    return from_physical(profile, grid)


def _vector_from_scalar(phi: ScalarField, axis: int = 0) -> VectorField:
    """P(phi e_axis)."""
    coeffs = np.zeros((phi.grid.dim,) + phi.grid.shape, dtype=np.complex128)
    coeffs[axis] = phi.coeffs
    return leray_project(VectorField(phi.grid, coeffs))


def gaussian_bump(grid: SpectralGrid, rng: np.random.Generator, width: float,
                  amplitude: float = 1.0) -> VectorField:
    """Leray projection of a randomly centred and oriented Gaussian bump."""
    center = rng.uniform(0, grid.box_length, grid.dim)
    direction = rng.standard_normal(grid.dim)
    direction /= np.linalg.norm(direction)
    r2 = np.sum(_periodic_offsets(grid, center) ** 2, axis=0)
    bump = np.exp(-r2 / (2 * width ** 2))
    bump -= bump.mean()
    samples = direction.reshape((-1,) + (1,) * grid.dim) * bump
    return _normalized(leray_project(vector_from_physical(samples, grid)), amplitude)


def dilate_field(u: VectorField, factor: int) -> VectorField:
    """Navier-Stokes scaling u -> m u(m x) on the torus, m a positive integer."""
    if factor < 1 or int(factor) != factor:
        raise ParameterError(f"dilation factor must be a positive integer, got {factor}")
    grid = u.grid
    nonzero = np.any(u.coeffs != 0, axis=0)
    indices = grid.lattice_indices[(slice(None),) + (nonzero,)].T
    if len(indices):
        _check_resolvable(grid, float(np.max(np.abs(indices))) * factor, "dilated field")
    values = u.coeffs[(slice(None),) + (nonzero,)] * factor
    return VectorField(grid, _place(grid, indices * factor, values), u.divergence_free)


def generate_corpus(spec: CorpusSpec, grid: SpectralGrid) -> List[VectorField]:
    """``spec.count`` fields of one family; deterministic given the seed."""
    rng = np.random.default_rng(spec.seed)
    fields: List[VectorField] = []
    for i in range(spec.count):
        if spec.family == "single_mode":
            u = single_mode(grid, spec.mode, spec.amplitude)
        elif spec.family == "gaussian_bump":
            u = gaussian_bump(grid, rng, spec.width, spec.amplitude)
        elif spec.family == "random_band_limited":
            u = random_vector_field(grid, rng, spec.band, spec.amplitude)
        elif spec.family == "truncated_power_law":
            phi = power_law_profile(grid, spec.exponent)
            u = _vector_from_scalar(phi, i % grid.dim) * spec.amplitude
        else:
            phi = power_law_profile(grid, grid.dim / 2)
            u = _vector_from_scalar(fractional_laplacian(phi, -spec.riesz_order), i % grid.dim) * spec.amplitude
        fields.append(u)
    logger.info("Generated %d %s field(s) on %d^%d grid", len(fields), spec.family,
                grid.n_per_axis, grid.dim)
    return fields
