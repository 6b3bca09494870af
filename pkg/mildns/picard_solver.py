"""Mild solutions by Picard iteration on u = e^{t Delta} u0 - B(u, u).

The iteration x_{n+1} = y - B(x_n, x_n) starts from the heat flow y and
contracts in the Kato weighted sup norm. Smallness gates evaluate the
sufficient conditions under which the contraction is guaranteed, and an
integrating-factor Runge-Kutta integrator provides an independent reference
solution.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from . import hypotheses
from .duhamel import (
    Trajectory,
    TimeGrid,
    bilinear_trajectory,
    estimate_bilinear_constant,
    nonlinear_term,
)
from .errors import (
    ExponentWindowError,
    NumericalBlowupError,
    OracleInstabilityError,
    ParameterError,
    ZeroModeError,
)
from .lorentz_norms import (
    KatoIndex,
    NormIndex,
    besov_norm_heat,
    heat_time_grid,
    heat_weighted_profile,
    kato_weighted_sup,
    linf_sobolev_lorentz,
)
from .spectral_field import VectorField, heat_propagate

logger = logging.getLogger(__name__)

DEFAULT_NODES = 64
DEFAULT_GAMMA = 2.0
# oracle norm growth treated as instability
ORACLE_GROWTH_LIMIT = 1e6


@dataclass(frozen=True)
class SolverConfig:
    """Everything a solve needs besides the initial datum."""

    kato: KatoIndex
    timegrid: TimeGrid
    tol: float = 1e-10
    max_iter: int = 50
    delta_gate: float = 1.0
    sigma_gate: float = 1.0
    solution_r: Optional[float] = None
    blowup_ratio: float = 1e8
    oracle_steps: int = 256

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be at least 1, got {self.max_iter}")
        if not self.delta_gate > 0:
            raise ParameterError(f"delta_gate must be positive, got {self.delta_gate}")
        if not self.sigma_gate > 0:
            raise ParameterError(f"sigma_gate must be positive, got {self.sigma_gate}")
        if self.oracle_steps < 1:
            raise ParameterError(f"oracle_steps must be at least 1, got {self.oracle_steps}")
        if not math.isclose(self.timegrid.T, self.kato.T, rel_tol=1e-12):
            raise ParameterError(f"time grid horizon {self.timegrid.T} differs from Kato horizon {self.kato.T}")

    @classmethod
    def build(cls, dim: int, s: float, q: float, q_tilde: float, r: float, T: float,
              M: int = DEFAULT_NODES, gamma: float = DEFAULT_GAMMA, **options) -> "SolverConfig":
        kato = KatoIndex(s, q, q_tilde, r, T, dim)
        return cls(kato, TimeGrid.graded(T, M, gamma), **options)

    @property
    def T(self) -> float:
        return self.timegrid.T

    def with_horizon(self, T: float, timegrid: TimeGrid = None) -> "SolverConfig":
        """Same settings on [0, T]; defaults to a fresh graded grid."""
        if timegrid is None:
            timegrid = TimeGrid.graded(T, self.timegrid.M, self.timegrid.gamma)
        return replace(self, kato=self.kato.with_horizon(timegrid.T), timegrid=timegrid)

    def summary(self) -> Dict:
        k = self.kato
        return {"dim": k.dim, "s": k.s, "q": k.q, "q_tilde": k.q_tilde, "r": k.r, "T": self.T,
                "M": self.timegrid.M, "gamma": self.timegrid.gamma, "tol": self.tol,
                "max_iter": self.max_iter, "delta_gate": self.delta_gate,
                "sigma_gate": self.sigma_gate}


@dataclass
class GateReport:
    """Left-hand side of a smallness condition against its threshold."""

    kind: str
    lhs: float
    threshold: float
    T: float
    time_power: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weighted_profile: np.ndarray = field(default_factory=lambda: np.zeros(0))
    suggested_T: Optional[float] = None
    besov_exponent: Optional[float] = None
    critical: bool = False

    @property
    def passes(self) -> bool:
        return self.lhs <= self.threshold


@dataclass
class SolveReport:
    """Outcome of a Picard solve; non-convergence is reported, not raised."""

    converged: bool
    iterations: int
    residual_history: List[float]
    contraction_ratio: float
    fit_r2: float
    solution: Trajectory
    y_norm: float
    kato_norm: float
    kato_norm_r1: float
    kato_norm_rq: float
    linf_norm: float
    fixed_point_residual: float
    eta_hat: float
    gate_values: Dict[str, Optional[float]] = field(default_factory=dict)
    gate_passes: Dict[str, Optional[bool]] = field(default_factory=dict)

    def theorem_bound_holds(self, slack: float = 1e-2) -> Optional[bool]:
        """||u|| <= (1 + slack)/(2 eta) whenever 4 eta ||y|| <= 1; None if not applicable."""
        if self.eta_hat <= 0 or 4 * self.eta_hat * self.y_norm > 1:
            return None
        return self.kato_norm <= (1 + slack) / (2 * self.eta_hat)

    def to_dict(self) -> Dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "contraction_ratio": self.contraction_ratio,
            "fit_r2": self.fit_r2,
            "y_norm": self.y_norm,
            "kato_norm": self.kato_norm,
            "kato_norm_r1": self.kato_norm_r1,
            "kato_norm_rq": self.kato_norm_rq,
            "linf_norm": self.linf_norm,
            "fixed_point_residual": self.fixed_point_residual,
            "eta_hat": self.eta_hat,
            "gate_values": dict(self.gate_values),
            "gate_passes": dict(self.gate_passes),
        }


def _require_finite(coeffs: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(coeffs)):
        raise NumericalBlowupError(f"non-finite values in {where}")


def _validated_datum(u0: VectorField) -> VectorField:
    """u0 flagged divergence-free (checked) with a zero mean."""
    datum = u0 if u0.divergence_free else VectorField(u0.grid, u0.coeffs, divergence_free=True)
    scale = float(np.max(np.abs(datum.coeffs)))
    if np.any(np.abs(datum.zero_mode) > 1e-12 * scale):
        raise ZeroModeError("initial datum must have zero mean")
    return datum


def heat_trajectory(u0: VectorField, timegrid: TimeGrid) -> Trajectory:
    """y(t_j) = e^{t_j Delta} u0; node 0 holds u0."""
    u0 = _validated_datum(u0)
    return Trajectory(timegrid, tuple(heat_propagate(u0, t) for t in timegrid.nodes), "heat-flow")


def _geometric_fit(residuals: Sequence[float]) -> Tuple[float, float]:
    """Ratio and R^2 of a log-linear fit of the positive residuals."""
    positive = [r for r in residuals if r > 0]
    if len(positive) < 2:
        return 0.0, 1.0
    if len(positive) == 2:
        return positive[1] / positive[0], 1.0
    fit = linregress(np.arange(len(positive)), np.log(positive))
    return float(math.exp(fit.slope)), float(fit.rvalue ** 2)


# ---------------------------------------------------------------------------
# gates


def smallness_gate(u0: VectorField, cfg: SolverConfig) -> GateReport:
    """T^{(1+s-d/q)/2} sup_{0<t<=T} t^{alpha/2} ||e^{t Delta} u0||_{H^s_{q~}} against delta.

    The sup runs over the positive nodes of the time grid. ``suggested_T`` is
    the largest node whose truncated gate passes.
    """
    k = cfg.kato
    gate_idx = k.with_r(k.q_tilde)
    times = cfg.timegrid.nodes[1:]
    profile = heat_weighted_profile(u0, gate_idx, times)
    power = hypotheses.time_power(k.s, k.q, k.dim)
    running = np.maximum.accumulate(profile)
    lhs_by_node = times ** power * running
    passing = np.nonzero(lhs_by_node <= cfg.delta_gate)[0]
    suggested = float(times[passing[-1]]) if len(passing) else None
    report = GateReport("smallness", float(lhs_by_node[-1]), cfg.delta_gate, cfg.T, power,
                        times, profile, suggested)
    logger.info("Smallness gate: lhs=%.6g delta=%.6g passes=%s suggested T=%s",
                report.lhs, report.threshold, report.passes, suggested)
    return report


def besov_smallness_gate(u0: VectorField, cfg: SolverConfig, s: float = None,
                         q: float = None, q_tilde: float = None) -> GateReport:
    """T^{(1+s-d/q)/2} ||u0||_{B^{s-(d/q-d/q~), inf}_{q~}} against delta.

    At the critical index s = d/q - 1 the T factor is absent and the gate is
    the global small-data condition, compared against ``sigma_gate``.
    """
    k = cfg.kato
    s = k.s if s is None else s
    q = k.q if q is None else q
    q_tilde = k.q_tilde if q_tilde is None else q_tilde
    dim = u0.grid.dim
    hypotheses.check_existence_window(s, q, q_tilde, k.r, dim)
    critical = hypotheses.is_critical(s, q, dim)
    if critical:
        hypotheses.check_critical_window(q, q_tilde, dim)
    exponent = s - (dim / q - dim / q_tilde)
    besov = besov_norm_heat(u0, exponent, math.inf, q_tilde, alpha=s, times=heat_time_grid(u0.grid))
    power = 0.0 if critical else hypotheses.time_power(s, q, dim)
    T = math.inf if critical else cfg.T
    lhs = besov if critical else cfg.T ** power * besov
    threshold = cfg.sigma_gate if critical else cfg.delta_gate
    report = GateReport("besov", float(lhs), threshold, T, power,
                        besov_exponent=exponent, critical=critical)
    logger.info("Besov gate (exponent %.4g%s): lhs=%.6g threshold=%.6g passes=%s",
                exponent, ", critical" if critical else "", report.lhs, report.threshold, report.passes)
    return report


def calibrate_delta(pairs: Sequence[Tuple[Trajectory, Trajectory]], idx: KatoIndex) -> float:
    """delta = 1/(4 C) with C the corpus-estimated Kato bilinear constant."""
    constant = estimate_bilinear_constant(pairs, idx).kato_max
    return math.inf if constant == 0 else 1.0 / (4.0 * constant)


# ---------------------------------------------------------------------------
# solvers


class BaseMildSolver:
    """Base class for solvers of the mild formulation with common functionality."""

    name = "base"

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.run_log: List[Dict] = []

    def solve(self, u0: VectorField):
        """Solve for the initial datum u0.

        This method should be implemented by subclasses.
        """
        raise NotImplementedError("Subclasses must implement solve")

    def _log_run(self, label: str, payload: Dict) -> None:
        self.run_log.append({"timestamp": datetime.now().isoformat(), "solver": self.name,
                             "label": label, **payload})

    def save_full_log(self, filename: str = None) -> str:
        """Save the configuration and every logged run as JSON."""
        if filename is None:
            filename = f"{self.name}_log_{datetime.now().strftime('%Y%m%d_%H%M%S')}.json"
        with open(filename, "w", encoding="utf-8") as f:
            json.dump({"config": self.cfg.summary(), "runs": self.run_log,
                       "timestamp": datetime.now().isoformat()}, f, indent=2)
        logger.info("Full solver log saved to %s", filename)
        return filename

    def save_report_as_markdown(self, label: str, report: SolveReport, folder: str = "reports") -> str:
        """Write a markdown summary of one solve into ``folder``."""
        os.makedirs(folder, exist_ok=True)
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in label)[:40] or "datum"
        filename = os.path.join(folder, f"{safe}.md")
        lines = [f"# Mild solution report: {label}", "",
                 "## Configuration", ""]
        lines += [f"- **{key}:** {value}" for key, value in self.cfg.summary().items()]
        lines += ["", "## Outcome", "",
                  f"- **Converged:** {'yes' if report.converged else 'no'}",
                  f"- **Iterations:** {report.iterations}",
                  f"- **Contraction ratio:** {report.contraction_ratio:.6g} (R^2 {report.fit_r2:.4f})",
                  f"- **Kato norm:** {report.kato_norm:.6g} (r=1: {report.kato_norm_r1:.6g}, "
                  f"r=q~: {report.kato_norm_rq:.6g})",
                  f"- **L^inf Sobolev-Lorentz norm:** {report.linf_norm:.6g}",
                  f"- **Fixed-point residual:** {report.fixed_point_residual:.3e}",
                  f"- **Measured eta:** {report.eta_hat:.6g}", ""]
        lines += ["## Gates", ""]
        for kind, value in report.gate_values.items():
            lines.append(f"- **{kind}:** {'n/a' if value is None else f'{value:.6g}'}")
        lines += ["", "## Residual history", "", "| round | residual |", "|---|---|"]
        lines += [f"| {i + 1} | {r:.6e} |" for i, r in enumerate(report.residual_history)]
        with open(filename, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        logger.info("Solve report saved as markdown to %s", filename)
        return filename


class PicardSolver(BaseMildSolver):
    """Fixed-point rounds x_{n+1} = y - B(x_n, x_n) from x_0 = y."""

    name = "picard"

    def solve(self, u0: VectorField, label: str = "datum") -> SolveReport:
        cfg = self.cfg
        idx = cfg.kato
        y = heat_trajectory(u0, cfg.timegrid)
        y_norm = kato_weighted_sup(y, idx).value

        x = y
        Bx = bilinear_trajectory(x, x)
        eta_hat = 0.0

        def measured_eta(x: Trajectory, Bx: Trajectory) -> float:
            return estimate_bilinear_constant([(x, x)], idx, images=[Bx], validate=False).contraction_max

        history: List[float] = []
        converged = False

        for round_num in range(1, cfg.max_iter + 1):
            logger.info("=== PICARD ROUND %d/%d ===", round_num, cfg.max_iter)
            eta_hat = max(eta_hat, measured_eta(x, Bx))
            x_new = y - Bx
            _require_finite(x_new.coefficients, f"Picard iterate {round_num}")
            residual = kato_weighted_sup(x_new - x, idx).value
            history.append(residual)
            logger.debug("round %d: residual %.6e (y norm %.6e)", round_num, residual, y_norm)
            x = x_new
            Bx = bilinear_trajectory(x, x)
            if residual <= cfg.tol * y_norm:
                converged = True
                break
            if residual > cfg.blowup_ratio * y_norm:
                logger.warning("Picard residual %.3e exceeds %.1e times the heat flow norm; stopping",
                               residual, cfg.blowup_ratio)
                break

        x_norm = kato_weighted_sup(x, idx).value
        eta_hat = max(eta_hat, measured_eta(x, Bx))
        fixed_point_residual = kato_weighted_sup(x - (y - Bx), idx).value
        ratio, r2 = _geometric_fit(history)
        solution = Trajectory(cfg.timegrid, x.fields, "picard")

        smallness = smallness_gate(u0, cfg)
        gates = {"smallness": smallness.lhs}
        passes = {"smallness": smallness.passes}
        try:
            besov = besov_smallness_gate(u0, cfg)
            gates["besov"], passes["besov"] = besov.lhs, besov.passes
        except ExponentWindowError as e:
            logger.debug("Besov gate skipped: %s", e)
            gates["besov"], passes["besov"] = None, None

        report = SolveReport(
            converged=converged,
            iterations=len(history),
            residual_history=history,
            contraction_ratio=ratio,
            fit_r2=r2,
            solution=solution,
            y_norm=y_norm,
            kato_norm=x_norm,
            kato_norm_r1=kato_weighted_sup(x, idx.with_r(1.0)).value,
            kato_norm_rq=kato_weighted_sup(x, idx.with_r(idx.q_tilde)).value,
            linf_norm=linf_sobolev_lorentz(x, NormIndex(idx.q, cfg.solution_r or idx.q, idx.s)),
            fixed_point_residual=fixed_point_residual,
            eta_hat=eta_hat,
            gate_values=gates,
            gate_passes=passes,
        )
        logger.info("Picard %s after %d round(s); contraction ratio %.4g",
                    "converged" if converged else "did not converge", report.iterations, ratio)
        self._log_run(label, report.to_dict())
        return report


class OracleIntegrator(BaseMildSolver):
    """Integrating-factor RK4 for du/dt = Delta u - P div(u (x) u).

    Each interval of the solver time grid is split into equal substeps no
    longer than T / oracle_steps, so the output lands on the grid nodes.
    """

    name = "oracle"

    def solve(self, u0: VectorField, label: str = "datum") -> Trajectory:
        u0 = _validated_datum(u0)
        grid = u0.grid
        k2 = grid.k_squared
        target = self.cfg.T / self.cfg.oracle_steps
        limit = ORACLE_GROWTH_LIMIT * max(float(np.max(np.abs(u0.coeffs))), np.finfo(float).tiny)

        def rhs(c: np.ndarray) -> np.ndarray:
            u = VectorField(grid, c)
            return -nonlinear_term(u, u).coeffs

        state = u0.coeffs.copy()
        samples = [state.copy()]
        substeps = 0
        for j, h_interval in enumerate(self.cfg.timegrid.steps):
            count = max(1, int(math.ceil(h_interval / target - 1e-9)))
            h = h_interval / count
            full = np.exp(-k2 * h)
            half = np.exp(-k2 * h / 2)
            for _ in range(count):
                a = rhs(state)
                b = rhs(half * (state + 0.5 * h * a))
                c = rhs(half * state + 0.5 * h * b)
                d = rhs(full * state + h * half * c)
                state = full * state + (h / 6) * (full * a + 2 * half * (b + c) + d)
                substeps += 1
                _require_finite(state, f"oracle substep {substeps}")
                if np.max(np.abs(state)) > limit:
                    raise OracleInstabilityError(
                        f"oracle norm grew beyond {ORACLE_GROWTH_LIMIT:g} times the datum at "
                        f"t={self.cfg.timegrid.nodes[j + 1]:.4g}; increase oracle_steps")
            samples.append(state.copy())
            logger.debug("oracle reached node %d (t=%.4g)", j + 1, self.cfg.timegrid.nodes[j + 1])
        logger.info("Oracle integration finished after %d substeps", substeps)
        self._log_run(label, {"substeps": substeps})
        return Trajectory.from_coefficients(self.cfg.timegrid, grid, samples, tag="oracle")


def create_solver(kind: str, cfg: SolverConfig) -> BaseMildSolver:
    """Create a solver of the given kind."""
    if kind == "picard":
        return PicardSolver(cfg)
    elif kind == "oracle":
        return OracleIntegrator(cfg)
    else:
        raise ValueError(f"Unknown solver: {kind}")


def picard_iterate(u0: VectorField, cfg: SolverConfig) -> SolveReport:
    return PicardSolver(cfg).solve(u0)


def oracle_integrate(u0: VectorField, T: float, steps: int, timegrid: TimeGrid = None) -> Trajectory:
    """Reference solution on ``timegrid`` (default: the solver's graded grid on [0, T])."""
    if timegrid is None:
        timegrid = TimeGrid.graded(T, DEFAULT_NODES, DEFAULT_GAMMA)
    dim = u0.grid.dim
    # the oracle ignores the Kato index; any admissible one will do
    kato = KatoIndex(0.0, dim, 2 * dim, 2 * dim, timegrid.T, dim)
    return OracleIntegrator(SolverConfig(kato, timegrid, oracle_steps=steps)).solve(u0)
