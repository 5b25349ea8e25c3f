"""The exchange loop: solve on a grid, extract violating maximizers, refine.

Each iteration solves the finite problem on the current grid Omega_k, recovers
the dual vector q_k, extracts the set X_k of near-unit local maximizers of
|A*q_k| and refines Omega_{k+1} = Omega_k union X_k.  Grids are nested and the
objective is non-increasing (warm starts + a monotone inner solver make this
exact up to solver tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .certificate import ExtractionResult, MaximizerConfig, find_maximizers
from .finite_solver import FiniteProblem, solve_finite
from .measures import DiscreteMeasure, as_points, merge_atoms, set_distance, tv_norm
from .problem import Problem

__all__ = [
    "ExchangeConfig",
    "ExchangeState",
    "MetricsRow",
    "ExchangeResult",
    "METRICS_HEADER",
    "initial_grid",
    "exchange_step",
    "run_exchange",
]

METRICS_HEADER = [
    "k", "J", "J_hat", "grid_size", "Xk_size", "feas_excess",
    "dist_grid_xi", "dist_xi_Xk", "dist_Xk_xi", "q_err", "J_gap",
]

NAN = float("nan")


@dataclass(frozen=True)
class ExchangeConfig:
    max_iter: int = 40
    stop_feas_tol: float = 1e-7
    rule: str = "all"                      # "all" local maxima | "single" argmax
    maximizer: MaximizerConfig = field(default_factory=MaximizerConfig)
    solver_tol: float = 1e-9
    solver_max_iter: int = 200_000
    initial_grid: object = 8               # per-axis count or explicit points
    merge_radius_factor: float = 1e-7      # times domain diameter, for reporting
    amp_prune: float = 1e-12

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.stop_feas_tol < 0:
            raise ValueError("stop_feas_tol must be >= 0")
        if self.rule not in ("all", "single"):
            raise ValueError("rule must be 'all' or 'single'")


@dataclass
class MetricsRow:
    k: int
    J: float = NAN
    J_hat: float = NAN
    grid_size: int = 0
    Xk_size: int = 0
    feas_excess: float = NAN
    dist_grid_xi: float = NAN
    dist_xi_Xk: float = NAN
    dist_Xk_xi: float = NAN
    q_err: float = NAN
    J_gap: float = NAN

    def as_row(self) -> list:
        return [self.k, self.J, self.J_hat, self.grid_size, self.Xk_size,
                self.feas_excess, self.dist_grid_xi, self.dist_xi_Xk,
                self.dist_Xk_xi, self.q_err, self.J_gap]


@dataclass
class ExchangeState:
    k: int
    grid: np.ndarray                       # (p, d)
    measure: DiscreteMeasure | None = None
    dual: np.ndarray | None = None         # feasibility-rescaled q_k
    dual_scale: float = 1.0
    maximizers: np.ndarray | None = None   # X_k
    metrics: MetricsRow | None = None
    warm: np.ndarray | None = None         # amplitudes for the next solve
    mu_hat: DiscreteMeasure | None = None  # solution of the simple problem on X_k
    extraction: ExtractionResult | None = None
    solver_converged: bool = True
    stop: bool = False
    stop_reason: str = ""


@dataclass
class ExchangeResult:
    measure: DiscreteMeasure
    dual: np.ndarray
    metrics: list
    states: list                           # one ExchangeState per iteration
    termination: str
    solver_flagged: bool
    config: ExchangeConfig

    @property
    def grids(self) -> list:
        return [s.grid for s in self.states]

    @property
    def maximizer_sets(self) -> list:
        return [s.maximizers for s in self.states]


def initial_grid(problem: Problem, spec) -> np.ndarray:
    """Uniform per-axis grid (cell centers on boxes, left edges on the torus)
    or explicit points."""
    dom = problem.domain
    if isinstance(spec, (int, np.integer)):
        n = int(spec)
        axes = []
        for ax in range(dom.dim):
            lo, hi = dom.lower[ax], dom.upper[ax]
            if problem.operator.periodic[ax]:
                axes.append(lo + (hi - lo) * np.arange(n) / n)
            else:
                axes.append(lo + (hi - lo) * (np.arange(n) + 0.5) / n)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    return dom.check(as_points(spec, dom.dim))


def _reported_measure(grid, amplitudes, cfg: ExchangeConfig, diam: float) -> DiscreteMeasure:
    mu = DiscreteMeasure(grid, amplitudes)
    return merge_atoms(mu, cfg.merge_radius_factor * diam, prune=cfg.amp_prune)


def exchange_step(state: ExchangeState, problem: Problem,
                  cfg: ExchangeConfig, ground_truth=None,
                  reference=None) -> ExchangeState:
    """One exchange iteration; returns the successor state (never mutates)."""
    op, fid = problem.operator, problem.fidelity
    grid = state.grid
    rep = solve_finite(FiniteProblem(grid, op, fid), tol=cfg.solver_tol,
                       max_iter=cfg.solver_max_iter, warm_start=state.warm)
    ext = find_maximizers(op, rep.dual, cfg.maximizer)
    if cfg.rule == "single" and ext.points.shape[0] > 1:
        best = int(np.argmax(ext.values))
        ext = ExtractionResult(ext.points[best:best + 1],
                               ext.values[best:best + 1], ext.scan_max)
    xk = ext.points
    feas_excess = ext.max_value - 1.0

    measure = _reported_measure(grid, rep.amplitudes, cfg, problem.domain.diameter)

    mu_hat = None
    j_hat = NAN
    if xk.shape[0]:
        hat_rep = solve_finite(FiniteProblem(xk, op, fid), tol=cfg.solver_tol,
                               max_iter=cfg.solver_max_iter)
        mu_hat = _reported_measure(xk, hat_rep.amplitudes, cfg,
                                   problem.domain.diameter)
        j_hat = hat_rep.primal_value

    row = MetricsRow(k=state.k, J=rep.primal_value, J_hat=j_hat,
                     grid_size=grid.shape[0], Xk_size=xk.shape[0],
                     feas_excess=feas_excess)
    gt = ground_truth if ground_truth is not None else problem.ground_truth
    if gt is not None and gt.measure.n_atoms:
        xi = gt.measure.positions
        row.dist_grid_xi = set_distance(grid, xi)
        if xk.shape[0]:
            row.dist_xi_Xk = set_distance(xi, xk)
            row.dist_Xk_xi = set_distance(xk, xi)
    if reference is not None:
        q_ref, j_ref = reference
        row.q_err = float(np.linalg.norm(rep.dual / rep.dual_scale - q_ref))
        row.J_gap = rep.primal_value - j_ref

    # stopping: no extracted maximizer above the violation threshold
    stop = False
    reason = ""
    if xk.shape[0] == 0:
        stop, reason = True, "feasible"
    elif float(ext.values.max()) - 1.0 <= cfg.stop_feas_tol:
        stop, reason = True, "feasible"

    if stop:
        new_grid = grid
        warm = rep.amplitudes
    else:
        radius = cfg.maximizer.resolve(problem.domain).dedupe_radius
        dist = op.pairwise_dist(xk, grid)
        fresh = xk[dist.min(axis=1) > radius]
        if fresh.shape[0] == 0:
            stop, reason = True, "stalled"
            new_grid = grid
            warm = rep.amplitudes
        else:
            new_grid = np.vstack([grid, fresh])
            warm = np.concatenate([rep.amplitudes, np.zeros(fresh.shape[0])])

    return ExchangeState(
        k=state.k + 1,
        grid=new_grid,
        measure=measure,
        dual=rep.dual / rep.dual_scale,
        dual_scale=rep.dual_scale,
        maximizers=xk,
        metrics=row,
        warm=warm,
        mu_hat=mu_hat,
        extraction=ext,
        solver_converged=rep.converged,
        stop=stop,
        stop_reason=reason,
    )


def run_exchange(problem: Problem, cfg: ExchangeConfig | None = None,
                 ground_truth=None, reference=None) -> ExchangeResult:
    """Iterate exchange steps until no violating maximizer remains or the
    iteration budget is exhausted."""
    cfg = cfg or ExchangeConfig()
    grid0 = initial_grid(problem, cfg.initial_grid)
    state = ExchangeState(k=0, grid=grid0)
    states: list[ExchangeState] = []
    metrics: list[MetricsRow] = []
    flagged = False
    termination = "max_iter"
    for _ in range(cfg.max_iter):
        nxt = exchange_step(state, problem, cfg, ground_truth=ground_truth,
                            reference=reference)
        # the successor's record describes iteration state.k; keep the grid
        # it was computed on
        record = replace(nxt, grid=state.grid, k=state.k)
        states.append(record)
        metrics.append(record.metrics)
        flagged |= not record.solver_converged
        if nxt.stop:
            termination = nxt.stop_reason
            break
        state = ExchangeState(k=nxt.k, grid=nxt.grid, warm=nxt.warm)
    last = states[-1]
    return ExchangeResult(
        measure=last.measure,
        dual=last.dual,
        metrics=metrics,
        states=states,
        termination=termination,
        solver_flagged=flagged,
        config=cfg,
    )


def attach_reference_metrics(result: ExchangeResult,
                             q_ref: np.ndarray | None = None,
                             j_ref: float | None = None) -> ExchangeResult:
    """Fill the q_err / J_gap columns against a reference solution.

    Defaults to self-reference: the final dual and the best objective value
    seen along the run (the standard protocol when the analytic optimum is
    unknown).
    """
    if q_ref is None:
        q_ref = result.dual
    if j_ref is None:
        j_ref = min(
            min((r.J for r in result.metrics)),
            min((r.J_hat for r in result.metrics if not math.isnan(r.J_hat)),
                default=float("inf")),
        )
    for st in result.states:
        st.metrics.q_err = float(np.linalg.norm(st.dual - q_ref))
        st.metrics.J_gap = st.metrics.J - j_ref
    return result
