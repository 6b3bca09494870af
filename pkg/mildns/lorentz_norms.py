"""Rearrangement-based function space norms.

Lorentz norms are computed from the piecewise-constant decreasing
rearrangement of the physical samples, each sample carrying one cell volume,
with every step integrated in closed form. Sobolev-Lorentz norms apply
``Lambda^s`` first; Besov norms use the heat-semigroup characterization on a
geometric time grid. Norms of vector fields combine componentwise norms in
l^2.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from . import hypotheses
from .errors import EmptyInputError, ExponentWindowError
from .spectral_field import (
    Field,
    ScalarField,
    SpectralGrid,
    VectorField,
    fractional_laplacian,
    heat_propagate,
    to_physical,
)

if TYPE_CHECKING:
    from .duhamel import Trajectory

logger = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class RearrangementProfile:
    """Decreasing rearrangement f* as steps (value_i, measure_i).

    ``f*(t) = value_i`` on ``[T_{i-1}, T_i)`` where ``T_i`` are the cumulative
    measures. Values are strictly decreasing and positive; zeros are dropped.
    """

    values: np.ndarray
    measures: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        measures = np.asarray(self.measures, dtype=float)
        if values.shape != measures.shape or values.ndim != 1:
            raise ValueError("values and measures must be 1-d arrays of equal length")
        if np.any(np.diff(values) >= 0) or np.any(values <= 0) or np.any(measures <= 0):
            raise ValueError("profile needs strictly decreasing positive values and positive measures")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "measures", measures)

    @property
    def steps(self) -> List[Tuple[float, float]]:
        return list(zip(self.values.tolist(), self.measures.tolist()))

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measures))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.measures)

    def __len__(self) -> int:
        return len(self.values)

    def value_at(self, t: float) -> float:
        """f*(t), zero beyond the support."""
        i = int(np.searchsorted(self.cumulative, t, side="right"))
        return float(self.values[i]) if i < len(self.values) else 0.0


@dataclass(frozen=True)
class NormIndex:
    """Exponent triple (q, r, s) of a Sobolev-Lorentz norm."""

    q: float
    r: float = INF
    s: float = 0.0

    def __post_init__(self):
        hypotheses.check_norm_index(self.q, self.r, self.s)


@dataclass(frozen=True)
class KatoIndex:
    """Index set of the auxiliary space K^{s, q~}_{q, r, T}."""

    s: float
    q: float
    q_tilde: float
    r: float
    T: float
    dim: int

    def __post_init__(self):
        hypotheses.check_kato_index(self.s, self.q, self.q_tilde, self.dim)
        if self.r < 1:
            raise ExponentWindowError(f"violated: r >= 1 (r={self.r:g})")
        if not self.T > 0:
            raise ExponentWindowError(f"violated: T > 0 (T={self.T:g})")

    @property
    def alpha(self) -> float:
        return self.dim * (1 / self.q - 1 / self.q_tilde)

    @property
    def target(self) -> NormIndex:
        """Index (q~, r, s) of the weighted norm inside the sup."""
        return NormIndex(self.q_tilde, self.r, self.s)

    @property
    def base(self) -> NormIndex:
        """Index (q, r, s) of the initial-data space."""
        return NormIndex(self.q, self.r, self.s)

    def with_horizon(self, T: float) -> "KatoIndex":
        return replace(self, T=T)

    def with_r(self, r: float) -> "KatoIndex":
        return replace(self, r=r)


@dataclass(frozen=True)
class KatoNorm:
    """Weighted sup over the positive nodes plus the small-time tail."""

    value: float
    times: np.ndarray
    weighted: np.ndarray
    tail: Tuple[Tuple[float, float], ...]

    @property
    def argmax_time(self) -> float:
        return float(self.times[int(np.argmax(self.weighted))]) if len(self.times) else 0.0


@dataclass(frozen=True)
class NormResult:
    """One norm evaluation with enough metadata to tabulate it."""

    name: str
    value: float
    q: float
    r: float
    s: float
    dim: int
    n_per_axis: int
    box_length: float
    extra: dict = field(default_factory=dict)

    @classmethod
    def of(cls, name: str, value: float, idx: NormIndex, grid: SpectralGrid, **extra) -> "NormResult":
        return cls(name, float(value), idx.q, idx.r, idx.s, grid.dim, grid.n_per_axis, grid.box_length, extra)

    def as_row(self) -> dict:
        row = asdict(self)
        row.update(row.pop("extra"))
        return row


# ---------------------------------------------------------------------------
# rearrangement


def rearrange_samples(samples, cell_volume: float) -> RearrangementProfile:
    """Profile of |samples| sorted descending, equal values merged exactly."""
    magnitudes = np.abs(np.asarray(samples, dtype=float)).ravel()
    magnitudes = magnitudes[magnitudes > 0]
    values, counts = np.unique(magnitudes, return_counts=True)
    return RearrangementProfile(values[::-1], counts[::-1] * float(cell_volume))


def _magnitude_samples(f: Field) -> np.ndarray:
    samples = to_physical(f)
    if isinstance(f, VectorField):
        return np.sqrt(np.sum(samples ** 2, axis=0))
    return samples


def decreasing_rearrangement(f: Field) -> RearrangementProfile:
    """f* of a scalar field, or of the pointwise magnitude of a vector field."""
    return rearrange_samples(_magnitude_samples(f), f.grid.cell_volume)


def lorentz_norm(profile: RearrangementProfile, q: float, r: float) -> float:
    """||f||_{L^{q,r}} of a step profile, integrated exactly per step.

    Finite r: (sum_i v_i^r (q/r)(T_i^{r/q} - T_{i-1}^{r/q}))^{1/r}.
    r = inf: max_i v_i T_i^{1/q}.
    """
    hypotheses.check_norm_index(q, r, 0.0)
    if len(profile) == 0:
        return 0.0
    v = profile.values
    upper = profile.cumulative
    if math.isinf(r):
        return float(np.max(v * upper ** (1.0 / q)))
    if r == q:
        return float(np.sum(v ** q * profile.measures) ** (1.0 / q))
    lower = np.concatenate(([0.0], upper[:-1]))
    increments = upper ** (r / q) - lower ** (r / q)
    return float(((q / r) * np.sum(v ** r * increments)) ** (1.0 / r))


def _componentwise(f: Field, norm: Callable[[ScalarField], float]) -> float:
    if isinstance(f, VectorField):
        return float(math.sqrt(sum(norm(c) ** 2 for c in f.components)))
    return float(norm(f))


def lebesgue_norm(f: Field, q: float) -> float:
    """(sum |f|^q cell_volume)^{1/q}; q = inf gives the max."""
    if q < 1:
        raise ExponentWindowError(f"violated: q >= 1 (q={q:g})")

    def scalar(g: ScalarField) -> float:
        samples = np.abs(to_physical(g))
        if math.isinf(q):
            return float(np.max(samples))
        return float(np.sum(samples ** q) * g.grid.cell_volume) ** (1.0 / q)

    return _componentwise(f, scalar)


def lorentz_field_norm(f: Field, q: float, r: float) -> float:
    """||f||_{L^{q,r}} of a field (componentwise for vector fields)."""
    return _componentwise(f, lambda g: lorentz_norm(decreasing_rearrangement(g), q, r))


def sobolev_norm(f: Field, s: float, q: float) -> float:
    """Homogeneous Sobolev norm ||Lambda^s f||_{L^q}."""
    return lebesgue_norm(fractional_laplacian(f, s), q)


def sobolev_lorentz_norm(f: Field, idx: NormIndex) -> float:
    """||Lambda^s f||_{L^{q,r}}; r = q is evaluated by direct quadrature."""
    hypotheses.check_norm_index(idx.q, idx.r, idx.s, f.grid.dim)
    g = fractional_laplacian(f, idx.s)
    if idx.r == idx.q:
        return lebesgue_norm(g, idx.q)
    return lorentz_field_norm(g, idx.q, idx.r)


def lorentz_triangle_ratio(f: ScalarField, g: ScalarField, q: float, r: float) -> float:
    """||f + g|| / (||f|| + ||g||) in L^{q,r}; at most 1 when 1 <= r <= q."""
    denominator = lorentz_field_norm(f, q, r) + lorentz_field_norm(g, q, r)
    if denominator == 0:
        return 0.0
    return lorentz_field_norm(f + g, q, r) / denominator


def truncation_remainder(f: Field, level: float, q: float, r: float,
                         center: Optional[Sequence[float]] = None) -> float:
    """L^{q,r} norm of f outside {|x - x0| < level * L/8} intersected with {|f| < level}."""
    grid = f.grid
    magnitude = np.abs(_magnitude_samples(f))
    x0 = np.full(grid.dim, grid.box_length / 2) if center is None else np.asarray(center, dtype=float)
    offsets = grid.coordinates() - x0.reshape((-1,) + (1,) * grid.dim)
    # minimal periodic image
    offsets -= grid.box_length * np.round(offsets / grid.box_length)
    distance = np.sqrt(np.sum(offsets ** 2, axis=0))
    kept = (distance < level * grid.box_length / 8) & (magnitude < level)
    remainder = np.where(kept, 0.0, magnitude)
    return lorentz_norm(rearrange_samples(remainder, grid.cell_volume), q, r)


# ---------------------------------------------------------------------------
# Besov norms by the heat characterization


def heat_time_grid(grid: SpectralGrid, t_min: float = None, t_max: float = None,
                   ratio: float = 2 ** 0.25) -> np.ndarray:
    """Geometric grid t_min * ratio^j covering [t_min, t_max].

    Defaults tie the endpoints to the resolvable wavenumbers:
    t_min = (L / (pi n))^2 and t_max = L^2.
    """
    if t_min is None:
        t_min = (grid.box_length / (math.pi * grid.n_per_axis)) ** 2
    if t_max is None:
        t_max = grid.box_length ** 2
    if not 0 < t_min < t_max or ratio <= 1:
        raise ValueError(f"need 0 < t_min < t_max and ratio > 1, got {t_min}, {t_max}, {ratio}")
    count = int(math.floor(math.log(t_max / t_min) / math.log(ratio) + 1e-9)) + 1
    return t_min * ratio ** np.arange(count)


def besov_norm_heat(f: Field, s: float, p: float, q: float, alpha: float = 0.0,
                    times: np.ndarray = None, refine: bool = True) -> float:
    """Heat-characterized Besov norm of f in B^{s,p}_q.

    The integrand is g(t) = t^{(alpha - s)/2} ||Lambda^alpha e^{t Delta} f||_{L^q}.
    p = inf takes the sup over ``times`` (refined by bounded minimization in
    log t around the best node); finite p integrates g^p by the trapezoid
    rule in log t.
    """
    if s >= alpha:
        raise ExponentWindowError(f"violated: s < alpha (s={s:g}, alpha={alpha:g})")
    if p < 1:
        raise ExponentWindowError(f"violated: p >= 1 (p={p:g})")
    times = heat_time_grid(f.grid) if times is None else np.asarray(times, dtype=float)
    lifted = fractional_laplacian(f, alpha)
    beta = 0.5 * (alpha - s)

    def integrand(t: float) -> float:
        return t ** beta * lebesgue_norm(heat_propagate(lifted, t), q)

    values = np.array([integrand(t) for t in times])
    if not math.isinf(p):
        logs = np.log(times)
        return float(trapezoid(values ** p, logs) ** (1.0 / p))

    best = int(np.argmax(values))
    sup = float(values[best])
    if refine and sup > 0 and len(times) > 1:
        lo = math.log(times[max(best - 1, 0)])
        hi = math.log(times[min(best + 1, len(times) - 1)])
        result = minimize_scalar(lambda x: -integrand(math.exp(x)), bounds=(lo, hi),
                                 method="bounded", options={"xatol": 1e-10})
        if result.success:
            sup = max(sup, float(-result.fun))
        logger.debug("Besov sup refined near t=%.4g: grid %.12g -> %.12g",
                     times[best], values[best], sup)
    return sup


# ---------------------------------------------------------------------------
# trajectories


def heat_weighted_profile(u0: Field, idx: KatoIndex, times) -> np.ndarray:
    """t^{alpha/2} ||e^{t Delta} u0||_{H^s_{L^{q~,r}}} at each time."""
    target = idx.target
    return np.array([t ** (idx.alpha / 2) * sobolev_lorentz_norm(heat_propagate(u0, t), target)
                     for t in np.asarray(times, dtype=float)])


def kato_weighted_sup(traj: "Trajectory", idx: KatoIndex, tail_size: int = 3) -> KatoNorm:
    """sup over the positive nodes of t^{alpha/2} ||u(t)||_{H^s_{L^{q~,r}}}."""
    times = np.asarray(traj.times, dtype=float)
    positive = [i for i, t in enumerate(times) if t > 0]
    if not positive:
        raise EmptyInputError("trajectory has no nodes inside (0, T]")
    target = idx.target
    node_times = times[positive]
    weighted = np.array([node_times[j] ** (idx.alpha / 2) * sobolev_lorentz_norm(traj.fields[i], target)
                         for j, i in enumerate(positive)])
    tail = tuple((float(t), float(w)) for t, w in zip(node_times[:tail_size], weighted[:tail_size]))
    return KatoNorm(float(np.max(weighted)), node_times, weighted, tail)


def linf_sobolev_lorentz(traj: "Trajectory", idx: NormIndex) -> float:
    """max over all nodes of ||u(t)||_{H^s_{L^{q,r}}}."""
    if len(traj.fields) == 0:
        raise EmptyInputError("empty trajectory")
    return float(max(sobolev_lorentz_norm(u, idx) for u in traj.fields))
