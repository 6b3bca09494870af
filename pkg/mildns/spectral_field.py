"""Periodic-box spectral fields and the constant-coefficient operators of the
mild formulation.

Coefficients follow the forward-normalized convention: ``coeff(k)`` is the
Fourier series coefficient ``n^{-d} sum_x f(x) e^{-ik.x}``, so a constant
field ``c`` has zero mode ``c`` and ``sin(2 pi x_1 / L)`` has coefficients
``-+ i/2`` at ``+-(2 pi / L) e_1``. Norm constants (not ratios) depend on
this choice.

All operators are pure: inputs are never modified and coefficient arrays are
stored read-only.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np
from scipy import fft
from scipy.special import gamma

from .errors import DivergenceError, GridMismatchError, ParameterError, ZeroModeError

logger = logging.getLogger(__name__)

# max |sum_j k_j u_j(k)| allowed relative to max |u(k)| for divergence-free fields
DIVERGENCE_TOL = 1e-10
# relative size above which a zero mode counts as nonzero
ZERO_MODE_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralGrid:
    """Discretization of the torus [0, L)^d with n points per axis."""

    dim: int
    n_per_axis: int
    box_length: float = 2 * math.pi

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"dim must be 2 or 3, got {self.dim}")
        if self.n_per_axis <= 0 or self.n_per_axis % 2:
            raise ParameterError(f"n_per_axis must be a positive even integer, got {self.n_per_axis}")
        if not self.box_length > 0:
            raise ParameterError(f"box_length must be positive, got {self.box_length}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def axes(self) -> Tuple[int, ...]:
        """Trailing array axes holding the lattice (for stacked components)."""
        return tuple(range(-self.dim, 0))

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.n_per_axis) ** self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @cached_property
    def lattice_indices(self) -> np.ndarray:
        """Integer multi-indices m, shape (dim, n, ..., n), components in [-n/2, n/2)."""
        m = np.fft.fftfreq(self.n_per_axis, d=1.0 / self.n_per_axis).round().astype(int)
        return np.stack(np.meshgrid(*([m] * self.dim), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Lattice wavenumbers k = (2 pi / L) m."""
        return (2 * np.pi / self.box_length) * self.lattice_indices

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavenumbers ** 2, axis=0)

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def inverse_k_squared(self) -> np.ndarray:
        """1/|k|^2 with the zero mode set to 0."""
        out = np.zeros(self.shape)
        np.divide(1.0, self.k_squared, out=out, where=self.k_squared > 0)
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes with at least one component at the Nyquist index -n/2."""
        return np.any(self.lattice_indices == -self.n_per_axis // 2, axis=0)

    @cached_property
    def odd_wavenumbers(self) -> np.ndarray:
        """Wavenumbers with Nyquist rows zeroed, used by odd symbols."""
        return np.where(self.nyquist_mask, 0.0, self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with every |m_j| < n/3."""
        return np.all(np.abs(self.lattice_indices) < self.n_per_axis / 3, axis=0)

    def coordinates(self) -> np.ndarray:
        """Physical sample points, shape (dim, n, ..., n)."""
        x = np.arange(self.n_per_axis) * (self.box_length / self.n_per_axis)
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar field stored by its spectral coefficients."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _frozen(self.coeffs)
        if coeffs.shape != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def zero_mode(self) -> complex:
        return complex(self.coeffs[(0,) * self.grid.dim])

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            _require_same_grid(self, other)
            return ScalarField(self.grid, op(self.coeffs, other.coeffs))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar: float):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return ScalarField(self.grid, self.coeffs * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.coeffs)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Real vector field with ``dim`` components on one grid.

    ``coeffs`` has shape (dim, n, ..., n). When ``divergence_free`` is set the
    divergence invariant is checked on construction.
    """

    grid: SpectralGrid
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        coeffs = _frozen(self.coeffs)
        expected = (self.grid.dim,) + self.grid.shape
        if coeffs.shape != expected:
            raise GridMismatchError(f"coefficient shape {coeffs.shape} does not match {expected}")
        object.__setattr__(self, "coeffs", coeffs)
        if self.divergence_free:
            scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
            residual = max_divergence(self)
            if residual > DIVERGENCE_TOL * scale:
                raise DivergenceError(
                    f"divergence {residual:.3e} exceeds {DIVERGENCE_TOL:g} * max|u| = {DIVERGENCE_TOL * scale:.3e}")

    @classmethod
    def from_components(cls, components, divergence_free: bool = False) -> "VectorField":
        components = list(components)
        grid = components[0].grid
        for c in components[1:]:
            _require_same_grid(components[0], c)
        if len(components) != grid.dim:
            raise GridMismatchError(f"expected {grid.dim} components, got {len(components)}")
        return cls(grid, np.stack([c.coeffs for c in components]), divergence_free)

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape, dtype=np.complex128), True)

    @property
    def components(self) -> Tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, c) for c in self.coeffs)

    @property
    def zero_mode(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.dim].copy()

    def _combine(self, other, op):
        if isinstance(other, VectorField):
            _require_same_grid(self, other)
            return VectorField(self.grid, op(self.coeffs, other.coeffs),
                               self.divergence_free and other.divergence_free)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar: float):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return VectorField(self.grid, self.coeffs * scalar, self.divergence_free)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.coeffs, self.divergence_free)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Rank-two tensor field, ``coeffs`` of shape (dim, dim, n, ..., n)."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _frozen(self.coeffs)
        expected = (self.grid.dim, self.grid.dim) + self.grid.shape
        if coeffs.shape != expected:
            raise GridMismatchError(f"coefficient shape {coeffs.shape} does not match {expected}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def components(self) -> Tuple[Tuple[ScalarField, ...], ...]:
        return tuple(tuple(ScalarField(self.grid, c) for c in row) for row in self.coeffs)


Field = Union[ScalarField, VectorField]


def _require_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def _like(field, coeffs: np.ndarray, divergence_free: bool = None):
    """New field of the same kind as ``field`` holding ``coeffs``."""
    if isinstance(field, VectorField):
        flag = field.divergence_free if divergence_free is None else divergence_free
        return VectorField(field.grid, coeffs, flag)
    return ScalarField(field.grid, coeffs)


def _require_zero_mean(field, operation: str) -> None:
    mean = field.coeffs[(Ellipsis,) + (0,) * field.grid.dim]
    scale = float(np.max(np.abs(field.coeffs)))
    if np.any(np.abs(mean) > ZERO_MODE_RTOL * scale):
        raise ZeroModeError(f"{operation} is undefined on fields with a nonzero zero mode")


# ---------------------------------------------------------------------------
# transforms


def to_physical(f: Field) -> np.ndarray:
    """Real physical samples; vector fields give shape (dim, n, ..., n)."""
    return fft.ifftn(f.coeffs, axes=f.grid.axes, norm="forward").real


def vector_to_physical(u: VectorField) -> np.ndarray:
    return to_physical(u)


def from_physical(samples: np.ndarray, grid: SpectralGrid) -> ScalarField:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.shape:
        raise GridMismatchError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    return ScalarField(grid, fft.fftn(samples, norm="forward"))


def vector_from_physical(samples: np.ndarray, grid: SpectralGrid,
                         divergence_free: bool = False) -> VectorField:
    samples = np.asarray(samples, dtype=float)
    expected = (grid.dim,) + grid.shape
    if samples.shape != expected:
        raise GridMismatchError(f"sample shape {samples.shape} does not match {expected}")
    return VectorField(grid, fft.fftn(samples, axes=grid.axes, norm="forward"), divergence_free)


def hermitian_symmetrize(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """(c(k) + conj c(-k)) / 2 over the trailing lattice axes."""
    mirrored = coeffs
    for axis in grid.axes:
        mirrored = np.roll(np.flip(mirrored, axis=axis), 1, axis=axis)
    return 0.5 * (coeffs + np.conj(mirrored))


# ---------------------------------------------------------------------------
# multipliers


def fractional_laplacian(f: Field, s: float) -> Field:
    """Lambda^s: multiply coeff(k) by |k|^s.

    s > 0 sends the zero mode to 0; s < 0 rejects a nonzero zero mode.
    The symbol is even and real, so Nyquist rows keep their coefficients and
    Lambda^{s1} Lambda^{s2} = Lambda^{s1 + s2} holds on every mode but k = 0.
    """
    if s == 0:
        return f
    grid = f.grid
    if s < 0:
        _require_zero_mean(f, f"Lambda^{s:g}")
    symbol = np.zeros(grid.shape)
    nonzero = grid.k_abs > 0
    symbol[nonzero] = grid.k_abs[nonzero] ** s
    return _like(f, f.coeffs * symbol)


def riesz_potential(f: Field, s: float) -> Field:
    """I_s f = int f(y) |x - y|^{s - d} dy for 0 < s < d, i.e. c_{d,s} Lambda^{-s}."""
    d = f.grid.dim
    if not 0 < s < d:
        raise ParameterError(f"Riesz potential needs 0 < s < d, got s={s}")
    constant = math.pi ** (d / 2) * 2 ** s * gamma(s / 2) / gamma((d - s) / 2)
    potential = fractional_laplacian(f, -s)
    return _like(potential, constant * potential.coeffs)


def heat_propagate(f: Field, t: float) -> Field:
    """e^{t Delta}: multiply coeff(k) by exp(-|k|^2 t)."""
    if t < 0:
        raise ParameterError(f"heat propagation needs t >= 0, got {t}")
    if t == 0:
        return f
    return _like(f, f.coeffs * np.exp(-f.grid.k_squared * t))


def riesz_transform(f: ScalarField, j: int) -> ScalarField:
    """R_j: multiply coeff(k) by i k_j / |k|."""
    grid = f.grid
    if not 0 <= j < grid.dim:
        raise ParameterError(f"axis {j} out of range for dim {grid.dim}")
    _require_zero_mean(f, "Riesz transform")
    symbol = 1j * grid.odd_wavenumbers[j] * np.sqrt(grid.inverse_k_squared)
    return ScalarField(grid, f.coeffs * symbol)


def leray_project(u: VectorField) -> VectorField:
    """Helmholtz-Leray projection, symbol delta_jk - k_j k_k / |k|^2."""
    grid = u.grid
    k = grid.wavenumbers
    k_dot_u = np.sum(k * u.coeffs, axis=0)
    projected = u.coeffs - k * (k_dot_u * grid.inverse_k_squared)
    return VectorField(grid, projected, divergence_free=True)


# ---------------------------------------------------------------------------
# derivatives and products


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, 1j * f.grid.odd_wavenumbers * f.coeffs)


def divergence(u: VectorField) -> ScalarField:
    return ScalarField(u.grid, np.sum(1j * u.grid.odd_wavenumbers * u.coeffs, axis=0))


def max_divergence(u: VectorField) -> float:
    """max_k |sum_j i k_j u_j(k)| over the exact lattice wavenumbers."""
    return float(np.max(np.abs(np.sum(u.grid.wavenumbers * u.coeffs, axis=0))))


def _dealiased_samples(f: Field) -> np.ndarray:
    """Physical samples of f with every mode outside the 2/3 band removed."""
    return fft.ifftn(f.coeffs * f.grid.dealias_mask, axes=f.grid.axes, norm="forward").real


def pointwise_product(f: ScalarField, g: ScalarField) -> ScalarField:
    """Physical-space product of the 2/3-truncated factors, truncated again.

    Both factors live on |m_j| < n/3, so no product mode folds back into the
    kept band.
    """
    _require_same_grid(f, g)
    product = fft.fftn(_dealiased_samples(f) * _dealiased_samples(g), norm="forward")
    return ScalarField(f.grid, product * f.grid.dealias_mask)


def tensor_product(u: VectorField, v: VectorField) -> TensorField:
    """(u (x) v)_ij = u_i v_j of the 2/3-truncated factors, 2/3-rule truncated."""
    _require_same_grid(u, v)
    grid = u.grid
    up = _dealiased_samples(u)
    vp = up if v is u else _dealiased_samples(v)
    products = up[:, None] * vp[None, :]
    coeffs = fft.fftn(products, axes=grid.axes, norm="forward") * grid.dealias_mask
    return TensorField(grid, coeffs)


def divergence_tensor(F: TensorField) -> VectorField:
    """(div F)_i = sum_j d_j F_ij."""
    k = F.grid.odd_wavenumbers
    return VectorField(F.grid, np.sum(1j * k[None, :] * F.coeffs, axis=1))


# ---------------------------------------------------------------------------
# text dumps


def dump_spectral(field: Field, path) -> None:
    """Write ``m1 m2 m3 real imag`` per coefficient, components in blocks.

    ``m`` is the integer lattice index of the wavenumber k = 2 pi m / L; the
    header carries L, and m3 = 0 in 2D.
    """
    grid = field.grid
    blocks = field.coeffs.reshape((-1,) + grid.shape)
    m = grid.lattice_indices.reshape(grid.dim, -1)
    if grid.dim == 2:
        m = np.vstack([m, np.zeros((1, m.shape[1]), dtype=int)])
    rows = [np.column_stack([m.T, b.ravel().real, b.ravel().imag]) for b in blocks]
    header = (f"mildns spectral dump\n"
              f"dim={grid.dim} n={grid.n_per_axis} box_length={grid.box_length!r} "
              f"components={len(blocks)}")
    np.savetxt(path, np.vstack(rows), fmt=["%d", "%d", "%d", "%.16e", "%.16e"], header=header)
    logger.debug("Spectral dump of %d component(s) written to %s", len(blocks), path)


def load_spectral(path, divergence_free: bool = False) -> Field:
    """Inverse of :func:`dump_spectral`."""
    with open(path, "r", encoding="utf-8") as handle:
        handle.readline()
        meta = dict(item.split("=") for item in handle.readline().lstrip("# ").split())
    grid = SpectralGrid(int(meta["dim"]), int(meta["n"]), float(meta["box_length"]))
    components = int(meta["components"])
    data = np.loadtxt(path, ndmin=2)
    if data.shape[0] != components * grid.n_per_axis ** grid.dim:
        raise GridMismatchError(f"{path}: expected {components * grid.n_per_axis ** grid.dim} rows, got {data.shape[0]}")
    coeffs = np.zeros((components,) + grid.shape, dtype=np.complex128)
    index = data[:, :grid.dim].astype(int) % grid.n_per_axis
    block = grid.n_per_axis ** grid.dim
    for c in range(components):
        rows = slice(c * block, (c + 1) * block)
        coeffs[(c,) + tuple(index[rows].T)] = data[rows, 3] + 1j * data[rows, 4]
    if components == 1:
        return ScalarField(grid, coeffs[0])
    return VectorField(grid, coeffs, divergence_free)
