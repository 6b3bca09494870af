"""The bilinear Duhamel operator

    B(u, v)(t) = int_0^t e^{(t - tau) Delta} P div(u (x) v)(tau) dtau

on trajectories sampled on a graded time grid.

The quadrature is a product trapezoid rule: the projected nonlinearity is
interpolated linearly in tau on each panel and the heat factor is integrated
exactly per wavenumber. The first panel puts no weight on tau = 0. Values at
all nodes follow from the exact recursion

    B(t_{i+1}) = e^{h_i Delta} B(t_i) + panel_i.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Sequence, Tuple

import numpy as np

from . import hypotheses
from .errors import EmptyInputError, GridMismatchError, ParameterError
from .lorentz_norms import KatoIndex, kato_weighted_sup, lebesgue_norm
from .spectral_field import (
    SpectralGrid,
    VectorField,
    divergence_tensor,
    leray_project,
    max_divergence,
    tensor_product,
)

logger = logging.getLogger(__name__)

# below this |k|^2 h the panel weights switch to their Taylor series
_SERIES_CUTOFF = 1e-2


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Nodes 0 = t_0 < t_1 < ... < t_M = T."""

    nodes: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ParameterError("a time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ParameterError(f"first node must be 0, got {nodes[0]}")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def graded(cls, T: float, M: int, gamma: float = 2.0) -> "TimeGrid":
        """t_j = T (j/M)^gamma."""
        if T <= 0 or M < 1 or gamma < 1:
            raise ParameterError(f"graded grid needs T > 0, M >= 1, gamma >= 1 (got {T}, {M}, {gamma})")
        nodes = T * (np.arange(M + 1) / M) ** gamma
        nodes[-1] = T
        return cls(nodes, gamma)

    @classmethod
    def uniform(cls, T: float, M: int) -> "TimeGrid":
        return cls.graded(T, M, 1.0)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.gamma == other.gamma and np.array_equal(self.nodes, other.nodes)

    __hash__ = None

    def index_of(self, t: float) -> int:
        """Index of the node equal to t (up to rounding)."""
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > 1e-12 * max(self.T, 1.0):
            raise ParameterError(f"t={t} is not a node of the time grid")
        return i

    def truncated(self, horizon: float) -> "TimeGrid":
        """The nodes <= horizon; its T is the largest such node."""
        kept = self.nodes[self.nodes <= horizon * (1 + 1e-12)]
        return TimeGrid(kept, self.gamma)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Vector fields at the nodes of a time grid, all on one spectral grid."""

    timegrid: TimeGrid
    fields: Tuple[VectorField, ...]
    tag: str = ""

    def __post_init__(self):
        fields = tuple(self.fields)
        if len(fields) != len(self.timegrid):
            raise GridMismatchError(f"{len(fields)} fields for {len(self.timegrid)} time nodes")
        grid = fields[0].grid
        for u in fields[1:]:
            if u.grid != grid:
                raise GridMismatchError(f"trajectory mixes grids {grid} and {u.grid}")
        object.__setattr__(self, "fields", fields)

    @classmethod
    def zeros(cls, timegrid: TimeGrid, grid: SpectralGrid, tag: str = "zero") -> "Trajectory":
        zero = VectorField.zeros(grid)
        return cls(timegrid, (zero,) * len(timegrid), tag)

    @classmethod
    def from_coefficients(cls, timegrid: TimeGrid, grid: SpectralGrid, coeffs: np.ndarray,
                          tag: str = "", divergence_free: bool = True) -> "Trajectory":
        return cls(timegrid, tuple(VectorField(grid, c, divergence_free) for c in coeffs), tag)

    @property
    def grid(self) -> SpectralGrid:
        return self.fields[0].grid

    @property
    def times(self) -> np.ndarray:
        return self.timegrid.nodes

    @property
    def final(self) -> VectorField:
        return self.fields[-1]

    @property
    def divergence_free(self) -> bool:
        return all(u.divergence_free for u in self.fields)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """Stacked coefficients, shape (M+1, dim, n, ..., n)."""
        stacked = np.stack([u.coeffs for u in self.fields])
        stacked.setflags(write=False)
        return stacked

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, i: int) -> VectorField:
        return self.fields[i]

    def at(self, t: float) -> VectorField:
        return self.fields[self.timegrid.index_of(t)]

    def interpolate(self, t: float) -> VectorField:
        """Linear interpolation of the coefficients in time."""
        nodes = self.times
        if not 0 <= t <= nodes[-1] * (1 + 1e-12):
            raise ParameterError(f"t={t} outside [0, {nodes[-1]}]")
        j = int(np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, len(nodes) - 2))
        theta = min(max((t - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0), 1.0)
        coeffs = (1 - theta) * self.fields[j].coeffs + theta * self.fields[j + 1].coeffs
        return VectorField(self.grid, coeffs, self.divergence_free)

    def resample(self, timegrid: TimeGrid) -> "Trajectory":
        return Trajectory(timegrid, tuple(self.interpolate(t) for t in timegrid.nodes), self.tag)

    def max_divergence(self) -> float:
        return max(max_divergence(u) for u in self.fields)

    def _combine(self, other, op, tag):
        if not isinstance(other, Trajectory):
            return NotImplemented
        if other.timegrid != self.timegrid:
            raise GridMismatchError("trajectories live on different time grids")
        return Trajectory(self.timegrid, tuple(op(a, b) for a, b in zip(self.fields, other.fields)), tag)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, self.tag)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, self.tag)

    def __mul__(self, scalar: float):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return Trajectory(self.timegrid, tuple(u * scalar for u in self.fields), self.tag)
        return NotImplemented

    __rmul__ = __mul__


def _require_pair(U: Trajectory, V: Trajectory) -> None:
    if U.timegrid != V.timegrid:
        raise GridMismatchError("U and V live on different time grids")
    if U.grid != V.grid:
        raise GridMismatchError(f"U and V live on different spectral grids: {U.grid} vs {V.grid}")


def nonlinear_term(u: VectorField, v: VectorField) -> VectorField:
    """P div(u (x) v), divergence-free with zero mean."""
    return leray_project(divergence_tensor(tensor_product(u, v)))


def panel_weights(k_squared: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Exact weights of the far (tau_i) and near (tau_{i+1}) panel values.

    far  = int_0^h e^{-|k|^2 s} s/h ds     = h (1 - e^{-x}(1 + x)) / x^2
    near = int_0^h e^{-|k|^2 s} (1 - s/h) ds = h (x - 1 + e^{-x}) / x^2
    with x = |k|^2 h.
    """
    x = k_squared * h
    small = x < _SERIES_CUTOFF
    xs = np.where(small, x, 1.0)
    far = np.where(small,
                   0.5 - x / 3 + x ** 2 / 8 - x ** 3 / 30 + x ** 4 / 144,
                   -np.expm1(-xs) / xs ** 2 - np.exp(-xs) / xs)
    near = np.where(small,
                    0.5 - x / 6 + x ** 2 / 24 - x ** 3 / 120 + x ** 4 / 720,
                    (xs + np.expm1(-xs)) / xs ** 2)
    return h * far, h * near


def first_panel_weight(k_squared: np.ndarray, h: float) -> np.ndarray:
    """int_0^h e^{-|k|^2 s} ds = h (1 - e^{-x}) / x."""
    x = k_squared * h
    small = x < _SERIES_CUTOFF
    xs = np.where(small, x, 1.0)
    return h * np.where(small,
                        1 - x / 2 + x ** 2 / 6 - x ** 3 / 24 + x ** 4 / 120,
                        -np.expm1(-xs) / xs)


def _nonlinear_coefficients(U: Trajectory, V: Trajectory, upto: int) -> List[np.ndarray]:
    """N_i coefficients for nodes 1..upto (node 0 carries no weight)."""
    terms = [None]
    for i in range(1, upto + 1):
        terms.append(nonlinear_term(U.fields[i], V.fields[i]).coeffs)
    return terms


def _duhamel_recursion(U: Trajectory, V: Trajectory, upto: int) -> List[np.ndarray]:
    grid = U.grid
    k2 = grid.k_squared
    nodes = U.times
    N = _nonlinear_coefficients(U, V, upto)
    values = [np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)]
    if upto == 0:
        return values
    values.append(first_panel_weight(k2, nodes[1]) * N[1])
    for i in range(1, upto):
        h = nodes[i + 1] - nodes[i]
        far, near = panel_weights(k2, h)
        values.append(np.exp(-k2 * h) * values[i] + far * N[i] + near * N[i + 1])
    return values


def bilinear_trajectory(U: Trajectory, V: Trajectory) -> Trajectory:
    """B(U, V) at every node of the shared time grid; node 0 is zero."""
    _require_pair(U, V)
    values = _duhamel_recursion(U, V, U.timegrid.M)
    return Trajectory.from_coefficients(U.timegrid, U.grid, values, tag="bilinear")


def bilinear_B(U: Trajectory, V: Trajectory, t: float, quadrature: TimeGrid = None) -> VectorField:
    """B(U, V)(t) for a node t.

    With ``quadrature`` the integral uses that grid's nodes up to t (t must be
    one of them) and U, V are linearly interpolated onto it.
    """
    _require_pair(U, V)
    if quadrature is None:
        index = U.timegrid.index_of(t)
        values = _duhamel_recursion(U, V, index)
    else:
        index = quadrature.index_of(t)
        if index == 0:
            return VectorField.zeros(U.grid)
        fine = quadrature.truncated(quadrature.nodes[index])
        U, V = U.resample(fine), V.resample(fine)
        values = _duhamel_recursion(U, V, index)
    return VectorField(U.grid, values[index], True)


@dataclass
class QuadratureConvergence:
    """B(T) over a sequence of node counts with the observed order."""

    node_counts: List[int]
    values: List[VectorField]
    differences: List[float]
    reference_distances: List[float]
    orders: List[float]

    @property
    def reduction_factors(self) -> List[float]:
        """Ratios of consecutive distances to the finest value."""
        d = self.reference_distances
        return [d[i] / d[i + 1] if d[i + 1] > 0 else math.inf for i in range(len(d) - 1)]


def quadrature_convergence(build_pair: Callable[[TimeGrid], Tuple[Trajectory, Trajectory]],
                           T: float, node_counts: Sequence[int], gamma: float = 2.0) -> QuadratureConvergence:
    """Self-convergence of B(T) as the node count grows.

    ``build_pair`` samples U and V on each grid. Distances are relative L^2
    distances; the last node count serves as the reference.
    """
    node_counts = list(node_counts)
    if len(node_counts) < 2:
        raise EmptyInputError("need at least two node counts")
    values = []
    for M in node_counts:
        U, V = build_pair(TimeGrid.graded(T, M, gamma))
        values.append(bilinear_trajectory(U, V).final)
        logger.debug("B(T) computed with M=%d nodes", M)
    scale = lebesgue_norm(values[-1], 2) or 1.0
    differences = [lebesgue_norm(b - a, 2) / scale for a, b in zip(values, values[1:])]
    reference = [lebesgue_norm(v - values[-1], 2) / scale for v in values[:-1]]
    orders = []
    for i in range(len(differences) - 1):
        if differences[i + 1] > 0 and differences[i] > 0:
            growth = math.log(node_counts[i + 1] / node_counts[i])
            orders.append(math.log(differences[i] / differences[i + 1]) / growth)
        else:
            orders.append(math.inf)
    return QuadratureConvergence(node_counts, values, differences, reference, orders)


def symbol_bound_check(grid: SpectralGrid, t: float) -> float:
    """max_k of ||e^{-t|k|^2} (delta_jk - k_j k_k / |k|^2) i k_l|| / (|k| e^{-t|k|^2}).

    The matrix acts on rank-two tensors F_kl; its spectral norm is bounded by
    |k| e^{-t |k|^2} so the returned ratio is at most 1.
    """
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    d = grid.dim
    k = grid.wavenumbers.reshape(d, -1).T
    k2 = np.sum(k ** 2, axis=1)
    keep = k2 > 0
    k, k2 = k[keep], k2[keep]
    decay = np.exp(-t * k2)
    projector = np.eye(d)[None] - k[:, :, None] * k[:, None, :] / k2[:, None, None]
    symbol = decay[:, None, None, None] * projector[:, :, :, None] * (1j * k)[:, None, None, :]
    norms = np.linalg.norm(symbol.reshape(len(k2), d, d * d), ord=2, axis=(1, 2))
    bound = np.sqrt(k2) * decay
    positive = bound > 0
    return float(np.max(norms[positive] / bound[positive])) if np.any(positive) else 0.0


@dataclass
class BilinearConstantReport:
    """Empirical constants of the two bilinear estimates at one horizon.

    ``kato`` ratios measure ||B||_{K^{s,q~}_{q,1,T}}; ``target`` ratios measure
    ||B||_{K^{s,q}_{q,1,T}}. Both divide by T^{(1+s-d/q)/2} ||U||_K ||V||_K.
    ``contraction`` ratios are ||B(U, V)||_K / (||U||_K ||V||_K) in the input
    norm itself, the eta of the fixed-point argument.
    """

    T: float
    kato_ratios: List[float] = field(default_factory=list)
    target_ratios: List[float] = field(default_factory=list)
    contraction_ratios: List[float] = field(default_factory=list)
    degenerate: int = 0

    @property
    def kato_max(self) -> float:
        return max(self.kato_ratios, default=0.0)

    @property
    def target_max(self) -> float:
        return max(self.target_ratios, default=0.0)

    @property
    def contraction_max(self) -> float:
        return max(self.contraction_ratios, default=0.0)

    @property
    def constant(self) -> float:
        return max(self.kato_max, self.target_max)


def estimate_bilinear_constant(corpus: Sequence[Tuple[Trajectory, Trajectory]],
                               idx: KatoIndex, images: Sequence[Trajectory] = None,
                               validate: bool = True) -> BilinearConstantReport:
    """Max over the corpus of ||B(U, V)|| / (T^{(1+s-d/q)/2} ||U|| ||V||).

    Pairs with a zero denominator are counted as degenerate and excluded.
    ``images`` supplies B(U, V) for each pair when the caller already has it;
    ``validate=False`` skips the exponent window check for callers whose index
    was validated against a different window.
    """
    if not corpus:
        raise EmptyInputError("bilinear constant needs a nonempty corpus")
    if images is not None and len(images) != len(corpus):
        raise GridMismatchError(f"{len(images)} images for {len(corpus)} pairs")
    if validate:
        hypotheses.check_bilinear_window(idx.s, idx.q, idx.q_tilde, idx.dim)
    T = corpus[0][0].timegrid.T
    power = T ** hypotheses.time_power(idx.s, idx.q, idx.dim)
    kato_out = idx.with_r(1.0)
    target_out = KatoIndex(idx.s, idx.q, idx.q, 1.0, idx.T, idx.dim)
    report = BilinearConstantReport(T)
    for n, (U, V) in enumerate(corpus):
        product = kato_weighted_sup(U, idx).value * kato_weighted_sup(V, idx).value
        if product == 0:
            report.degenerate += 1
            continue
        B = bilinear_trajectory(U, V) if images is None else images[n]
        denominator = power * product
        report.kato_ratios.append(kato_weighted_sup(B, kato_out).value / denominator)
        report.target_ratios.append(kato_weighted_sup(B, target_out).value / denominator)
        report.contraction_ratios.append(kato_weighted_sup(B, idx).value / product)
        logger.debug("pair %d: kato ratio %.6g, target ratio %.6g, contraction %.6g", n,
                     report.kato_ratios[-1], report.target_ratios[-1], report.contraction_ratios[-1])
    logger.info("Bilinear constant at T=%g: %.6g (%d pairs, %d degenerate)",
                T, report.constant, len(corpus), report.degenerate)
    return report
