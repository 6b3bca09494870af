"""Experiment runners behind the command line, one per subcommand.

Every runner validates its exponent windows before doing any work, returns
rows as dicts keyed by the experiment's header, and flags degenerate rows
(zero denominators) instead of dropping them.
"""

import csv
import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import hypotheses
from .config import ExperimentConfig
from .corpus import CorpusSpec, dilate_field, generate_corpus, random_scalar_field
from .duhamel import TimeGrid, estimate_bilinear_constant
from .errors import OracleInstabilityError
from .lorentz_norms import (
    KatoIndex,
    NormIndex,
    besov_norm_heat,
    heat_time_grid,
    heat_weighted_profile,
    lebesgue_norm,
    lorentz_field_norm,
    sobolev_lorentz_norm,
    sobolev_norm,
)
from .picard_solver import (
    OracleIntegrator,
    PicardSolver,
    SolverConfig,
    calibrate_delta,
    heat_trajectory,
    smallness_gate,
)
from .spectral_field import (
    SpectralGrid,
    VectorField,
    dump_spectral,
    heat_propagate,
    max_divergence,
    pointwise_product,
)

logger = logging.getLogger(__name__)

HEADERS: Dict[str, List[str]] = {
    "corpus": ["field", "family", "dim", "n", "box_length", "l2_norm", "max_norm",
               "max_divergence", "zero_mode"],
    "norms": ["field", "n", "q", "r", "s", "q_tilde", "lebesgue", "sobolev_lorentz", "sobolev", "lorentz_r1",
              "lorentz_rinf", "besov", "nesting_ratio", "sobolev_embedding_ratio", "heat_ratio", "degenerate"],
    "embedding": ["kind", "n", "field", "q", "r", "s", "q_tilde", "besov", "heat_sup", "data_norm",
                  "besov_ratio", "heat_ratio", "drift", "degenerate"],
    "product": ["kind", "n", "pair", "s", "p", "q", "r", "ratio", "drift", "degenerate"],
    "bilinear": ["kind", "T", "pair", "s", "q", "q_tilde", "r", "kato_ratio", "target_ratio", "degenerate"],
    "solve": ["T", "s", "q", "q_tilde", "r", "datum", "amplitude", "gate_lhs", "delta", "gate_passes",
              "suggested_T", "besov_gate_lhs", "besov_gate_passes", "converged", "iterations",
              "contraction_ratio", "fit_r2", "oracle_distance", "oracle_unstable", "kato_norm", "kato_norm_r1",
              "kato_norm_rq", "linf_norm"],
}


@dataclass
class ExperimentResult:
    name: str
    rows: List[Dict]
    path: Optional[str] = None


# ---------------------------------------------------------------------------
# CSV


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.16e}"
    return str(value)


def emit_csv(rows: Iterable[Dict], path: str, header: Sequence[str], comment: str = None) -> str:
    """Write rows under a fixed header; floats carry 17 significant digits.

    ``comment`` becomes a leading ``# ...`` line. Empty ``rows`` gives a
    header-only file.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        writer = csv.DictWriter(f, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key)) for key in header})
    return path


# ---------------------------------------------------------------------------
# helpers


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> List:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _grids(cfg: ExperimentConfig) -> List[SpectralGrid]:
    """The base grid and its resolution doublings."""
    return [SpectralGrid(cfg.dim, cfg.n * 2 ** j, cfg.box_length) for j in range(cfg.refinements)]


def corpus_spec(cfg: ExperimentConfig) -> CorpusSpec:
    exponent = cfg.exponent if cfg.exponent > 0 else cfg.dim / cfg.q[0]
    return CorpusSpec(cfg.family, cfg.count, cfg.seed, tuple(cfg.mode), cfg.width,
                      (cfg.band_low, cfg.band_high), exponent, cfg.amplitude)


def build_corpus(cfg: ExperimentConfig, grid: SpectralGrid) -> List[VectorField]:
    """The configured corpus with every requested dilation of each field."""
    base = generate_corpus(corpus_spec(cfg), grid)
    return [u if m == 1 else dilate_field(u, m) for u in base for m in cfg.dilations]


def _drift(current: float, previous: float) -> Optional[float]:
    if previous == 0:
        return None
    return abs(current / previous - 1.0)


def _ratio(numerator: float, denominator: float) -> Tuple[Optional[float], bool]:
    if denominator == 0:
        return None, True
    return numerator / denominator, False


def _banner(title: str) -> None:
    logger.info("=== %s ===", title)


# ---------------------------------------------------------------------------
# corpus


def run_corpus_experiment(cfg: ExperimentConfig) -> List[Dict]:
    grid = SpectralGrid(cfg.dim, cfg.n, cfg.box_length)
    fields = build_corpus(cfg, grid)
    if cfg.dump_dir:
        os.makedirs(cfg.dump_dir, exist_ok=True)

    def summarize(item):
        i, u = item
        if cfg.dump_dir:
            dump_spectral(u, os.path.join(cfg.dump_dir, f"field_{i:03d}.txt"))
        return {
            "field": i, "family": cfg.family, "dim": grid.dim, "n": grid.n_per_axis,
            "box_length": grid.box_length, "l2_norm": lebesgue_norm(u, 2),
            "max_norm": lebesgue_norm(u, math.inf), "max_divergence": max_divergence(u),
            "zero_mode": float(np.max(np.abs(u.zero_mode))),
        }

    rows = _parallel_map(summarize, list(enumerate(fields)), cfg.workers)
    return sorted(rows, key=lambda row: row["field"])


# ---------------------------------------------------------------------------
# norms


def _norm_row(u: VectorField, i: int, q: float, r: float, s: float, q_tilde: float) -> Dict:
    """Norm values of one field; ``besov`` is B^{s-(d/q-d/q~), inf}_{q~}, blank unless q~ > q."""
    grid = u.grid
    idx = NormIndex(q, r, s)
    value = sobolev_lorentz_norm(u, idx)
    r1 = sobolev_lorentz_norm(u, NormIndex(q, 1.0, s))
    rinf = sobolev_lorentz_norm(u, NormIndex(q, math.inf, s))
    if s > 0:
        q_star = 1.0 / (1.0 / q - s / grid.dim)
        embedded = lorentz_field_norm(u, q_star, r)
    else:
        embedded = value
    heat = max(sobolev_lorentz_norm(heat_propagate(u, t), idx)
               for t in heat_time_grid(grid, ratio=2.0))
    besov = None
    if q_tilde > q:
        exponent = s - (grid.dim / q - grid.dim / q_tilde)
        besov = besov_norm_heat(u, exponent, math.inf, q_tilde, alpha=s)
    row = {"field": i, "n": grid.n_per_axis, "q": q, "r": r, "s": s, "q_tilde": q_tilde,
           "lebesgue": lebesgue_norm(u, q), "sobolev_lorentz": value, "sobolev": sobolev_norm(u, s, q),
           "lorentz_r1": r1, "lorentz_rinf": rinf, "besov": besov}
    row["nesting_ratio"], degenerate = _ratio(rinf, r1)
    row["sobolev_embedding_ratio"], _ = _ratio(embedded, value)
    row["heat_ratio"], _ = _ratio(heat, value)
    row["degenerate"] = degenerate
    return row


def run_norms_experiment(cfg: ExperimentConfig) -> List[Dict]:
    indices = list(itertools.product(cfg.q, cfg.r, cfg.s, cfg.q_tilde))
    for q, r, s, _ in indices:
        hypotheses.check_norm_index(q, r, s, cfg.dim)
    rows = []
    for grid in _grids(cfg):
        _banner(f"NORMS n={grid.n_per_axis}")
        fields = build_corpus(cfg, grid)
        jobs = [(i, u) + index for i, u in enumerate(fields) for index in indices]
        rows += _parallel_map(lambda job: _norm_row(job[1], job[0], *job[2:]), jobs, cfg.workers)
    return sorted(rows, key=lambda row: (row["q"], row["r"], row["s"], row["q_tilde"], row["field"], row["n"]))


# ---------------------------------------------------------------------------
# embedding


def embedding_sides(u: VectorField, q: float, r: float, s: float, q_tilde: float) -> Dict[str, float]:
    """Besov norm, heat-flow sup and data norm of the heat-flow embedding."""
    dim = u.grid.dim
    kato = KatoIndex(s, q, q_tilde, 1.0, 1.0, dim)
    times = heat_time_grid(u.grid)
    return {
        "besov": besov_norm_heat(u, s - (dim / q - dim / q_tilde), math.inf, q_tilde, alpha=s, times=times),
        "heat_sup": float(np.max(heat_weighted_profile(u, kato, times))),
        "data_norm": sobolev_lorentz_norm(u, NormIndex(q, r, s)),
    }


def run_embedding_experiment(cfg: ExperimentConfig) -> List[Dict]:
    indices = list(itertools.product(cfg.q, cfg.r, cfg.s, cfg.q_tilde))
    for q, r, s, q_tilde in indices:
        hypotheses.check_embedding_window(s, q, q_tilde, cfg.dim)
    rows = []
    previous: Dict[Tuple, Tuple[float, float]] = {}
    for grid in _grids(cfg):
        _banner(f"EMBEDDING n={grid.n_per_axis}")
        fields = build_corpus(cfg, grid)
        for q, r, s, q_tilde in indices:
            sides = _parallel_map(lambda u: embedding_sides(u, q, r, s, q_tilde), fields, cfg.workers)
            field_rows = []
            for i, side in enumerate(sides):
                row = {"kind": "field", "n": grid.n_per_axis, "field": i, "q": q, "r": r, "s": s,
                       "q_tilde": q_tilde, **side}
                row["besov_ratio"], degenerate = _ratio(side["besov"], side["data_norm"])
                row["heat_ratio"], _ = _ratio(side["heat_sup"], side["data_norm"])
                row["degenerate"] = degenerate
                field_rows.append(row)
            valid = [row for row in field_rows if not row["degenerate"]]
            best = (max((row["besov_ratio"] for row in valid), default=0.0),
                    max((row["heat_ratio"] for row in valid), default=0.0))
            key = (q, r, s, q_tilde)
            drift = None
            if key in previous:
                drifts = [_drift(b, a) for a, b in zip(previous[key], best)]
                drift = max((d for d in drifts if d is not None), default=None)
            previous[key] = best
            rows += field_rows
            rows.append({"kind": "summary", "n": grid.n_per_axis, "q": q, "r": r, "s": s,
                         "q_tilde": q_tilde, "besov_ratio": best[0], "heat_ratio": best[1],
                         "drift": drift, "degenerate": len(field_rows) - len(valid)})
            logger.info("embedding q=%g r=%g s=%g q~=%g n=%d: max ratios %.6g / %.6g",
                        q, r, s, q_tilde, grid.n_per_axis, best[0], best[1])
    return sorted(rows, key=lambda row: (row["q"], row["r"], row["s"], row["q_tilde"], row["n"],
                                         row["kind"] != "field", row.get("field") or 0))


# ---------------------------------------------------------------------------
# products


def product_ratio(u, v, s: float, p: float, q: float, r: float) -> Tuple[Optional[float], bool]:
    """||uv||_{H^s_r} / (||u||_{H^s_p} ||v||_{H^s_q})."""
    denominator = sobolev_norm(u, s, p) * sobolev_norm(v, s, q)
    return _ratio(sobolev_norm(pointwise_product(u, v), s, r), denominator)


def run_product_experiment(cfg: ExperimentConfig) -> List[Dict]:
    tuples = list(itertools.product(cfg.s, cfg.p, cfg.q))
    for s, p, q in tuples:
        hypotheses.check_product_window(p, q, s, cfg.dim)
    rows = []
    previous: Dict[Tuple, float] = {}
    for grid in _grids(cfg):
        _banner(f"PRODUCT n={grid.n_per_axis}")
        rng = np.random.default_rng(cfg.seed)
        band = (cfg.band_low, cfg.band_high)
        pairs = [(random_scalar_field(grid, rng, band), random_scalar_field(grid, rng, band))
                 for _ in range(cfg.count)]
        for s, p, q in tuples:
            r = hypotheses.product_exponent(p, q, s, cfg.dim)
            results = _parallel_map(lambda pair: product_ratio(*pair, s, p, q, r), pairs, cfg.workers)
            for i, (ratio, degenerate) in enumerate(results):
                rows.append({"kind": "pair", "n": grid.n_per_axis, "pair": i, "s": s, "p": p, "q": q,
                             "r": r, "ratio": ratio, "degenerate": degenerate})
            best = max((ratio for ratio, degenerate in results if not degenerate), default=0.0)
            drift = _drift(best, previous[(s, p, q)]) if (s, p, q) in previous else None
            previous[(s, p, q)] = best
            rows.append({"kind": "summary", "n": grid.n_per_axis, "s": s, "p": p, "q": q, "r": r,
                         "ratio": best, "drift": drift,
                         "degenerate": sum(1 for _, degenerate in results if degenerate)})
    return sorted(rows, key=lambda row: (row["s"], row["p"], row["q"], row["n"],
                                         row["kind"] != "pair", row.get("pair") or 0))


# ---------------------------------------------------------------------------
# bilinear estimate


def run_bilinear_experiment(cfg: ExperimentConfig) -> List[Dict]:
    indices = list(itertools.product(cfg.q, cfg.r, cfg.s, cfg.q_tilde))
    for q, r, s, q_tilde in indices:
        hypotheses.check_bilinear_window(s, q, q_tilde, cfg.dim)
    grid = SpectralGrid(cfg.dim, cfg.n, cfg.box_length)
    fields = build_corpus(cfg, grid)
    pair_indices = [(i, j) for i in range(len(fields)) for j in range(i, len(fields))]
    rows = []
    for q, r, s, q_tilde in indices:
        constants = []
        for T in cfg.T:
            _banner(f"BILINEAR T={T:g} q={q:g} s={s:g} q~={q_tilde:g}")
            timegrid = TimeGrid.graded(T, cfg.M, cfg.gamma)
            flows = _parallel_map(lambda u: heat_trajectory(u, timegrid), fields, cfg.workers)
            idx = KatoIndex(s, q, q_tilde, r, T, cfg.dim)
            reports = _parallel_map(lambda ij: estimate_bilinear_constant([(flows[ij[0]], flows[ij[1]])], idx),
                                    pair_indices, cfg.workers)
            common = {"T": T, "s": s, "q": q, "q_tilde": q_tilde, "r": r}
            for n, report in enumerate(reports):
                rows.append({"kind": "pair", "pair": n, **common,
                             "kato_ratio": report.kato_max if not report.degenerate else None,
                             "target_ratio": report.target_max if not report.degenerate else None,
                             "degenerate": bool(report.degenerate)})
            kato_max = max((rep.kato_max for rep in reports if not rep.degenerate), default=0.0)
            target_max = max((rep.target_max for rep in reports if not rep.degenerate), default=0.0)
            constants.append((kato_max, target_max))
            rows.append({"kind": "summary", **common, "kato_ratio": kato_max, "target_ratio": target_max,
                         "degenerate": sum(rep.degenerate for rep in reports)})
        spread = []
        for column in (0, 1):
            values = [c[column] for c in constants if c[column] > 0]
            spread.append(max(values) / min(values) if values else None)
        rows.append({"kind": "spread", "T": max(cfg.T), "s": s, "q": q, "q_tilde": q_tilde, "r": r,
                     "kato_ratio": spread[0], "target_ratio": spread[1], "degenerate": 0})
    kinds = {"pair": 0, "summary": 1, "spread": 2}
    return sorted(rows, key=lambda row: (row["q"], row["r"], row["s"], row["q_tilde"],
                                         kinds[row["kind"]], row["T"], row.get("pair") or 0))


# ---------------------------------------------------------------------------
# solver


def _relative_l2(a: VectorField, b: VectorField) -> float:
    reference = lebesgue_norm(b, 2)
    distance = lebesgue_norm(a - b, 2)
    return distance / reference if reference > 0 else distance


def solve_datum(u0: VectorField, solver_cfg: SolverConfig, label: str, report_dir: str = "") -> Dict:
    """One solver row: gate, Picard diagnostics and oracle distance."""
    gate = smallness_gate(u0, solver_cfg)
    picard = PicardSolver(solver_cfg)
    report = picard.solve(u0, label)
    if report_dir:
        picard.save_report_as_markdown(label, report, report_dir)
    try:
        oracle = OracleIntegrator(solver_cfg).solve(u0, label)
        distance, unstable = _relative_l2(report.solution.final, oracle.final), False
    except OracleInstabilityError as e:
        logger.warning("%s: %s", label, e)
        distance, unstable = None, True
    return {
        "gate_lhs": gate.lhs, "delta": gate.threshold, "gate_passes": gate.passes,
        "suggested_T": gate.suggested_T, "besov_gate_lhs": report.gate_values.get("besov"),
        "besov_gate_passes": report.gate_passes.get("besov"),
        "converged": report.converged, "iterations": report.iterations,
        "contraction_ratio": report.contraction_ratio, "fit_r2": report.fit_r2,
        "oracle_distance": distance, "oracle_unstable": unstable, "kato_norm": report.kato_norm,
        "kato_norm_r1": report.kato_norm_r1, "kato_norm_rq": report.kato_norm_rq,
        "linf_norm": report.linf_norm,
    }


def run_solver_experiment(cfg: ExperimentConfig) -> List[Dict]:
    indices = list(itertools.product(cfg.q, cfg.r, cfg.s, cfg.q_tilde))
    for q, r, s, q_tilde in indices:
        hypotheses.check_existence_window(s, q, q_tilde, r, cfg.dim)
    grid = SpectralGrid(cfg.dim, cfg.n, cfg.box_length)
    fields = build_corpus(cfg, grid)
    rows = []
    for q, r, s, q_tilde in indices:
        for T in cfg.T:
            _banner(f"SOLVE T={T:g} q={q:g} s={s:g} q~={q_tilde:g}")
            solver_cfg = SolverConfig.build(cfg.dim, s, q, q_tilde, r, T, cfg.M, cfg.gamma,
                                            tol=cfg.tol, max_iter=cfg.max_iter,
                                            oracle_steps=cfg.oracle_steps, sigma_gate=cfg.sigma_gate,
                                            delta_gate=cfg.delta_gate if cfg.delta_gate > 0 else 1.0)
            if cfg.delta_gate <= 0:
                flows = [heat_trajectory(u, solver_cfg.timegrid) for u in fields]
                delta = calibrate_delta([(y, y) for y in flows], solver_cfg.kato)
                solver_cfg = replace(solver_cfg, delta_gate=delta)
                logger.info("Calibrated delta = %.6g", delta)
            jobs = [(i, a) for i in range(len(fields)) for a in cfg.amplitudes]

            def run(job):
                i, a = job
                label = f"T{T:g}_q{q:g}_r{r:g}_s{s:g}_qt{q_tilde:g}_datum{i}_amp{a:g}"
                row = solve_datum(fields[i] * a, solver_cfg, label, cfg.report_dir)
                return {"T": T, "s": s, "q": q, "q_tilde": q_tilde, "r": r, "datum": i,
                        "amplitude": a, **row}

            rows += _parallel_map(run, jobs, cfg.workers)
    return sorted(rows, key=lambda row: (row["q"], row["r"], row["s"], row["q_tilde"], row["T"],
                                         row["datum"], row["amplitude"]))


RUNNERS: Dict[str, Callable[[ExperimentConfig], List[Dict]]] = {
    "corpus": run_corpus_experiment,
    "norms": run_norms_experiment,
    "embedding": run_embedding_experiment,
    "product": run_product_experiment,
    "bilinear": run_bilinear_experiment,
    "solve": run_solver_experiment,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run ``cfg.experiment`` and, with ``write``, emit its CSV to ``cfg.output``."""
    rows = RUNNERS[cfg.experiment](cfg)
    result = ExperimentResult(cfg.experiment, rows)
    if write:
        comment = f"mildns {cfg.experiment} {datetime.now().isoformat()}" if cfg.timestamp else None
        result.path = emit_csv(rows, cfg.output, HEADERS[cfg.experiment], comment)
        logger.info("%d row(s) written to %s", len(rows), result.path)
    return result
