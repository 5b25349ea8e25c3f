"""Alternating method: exchange refinement interleaved with sliding descent.

Each outer iteration (i) solves on the grid and extracts X_k, (ii) solves the
small problem restricted to X_k, (iii) slides amplitudes and positions by
gradient descent, (iv) optionally re-solves the amplitudes on the slid
positions (refit), and (v) feeds the slid positions back into the grid.  The
stopping rule is the exchange one, evaluated on the post-slide dual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certificate import ExtractionResult, MaximizerConfig, find_maximizers
from .exchange import (ExchangeConfig, MetricsRow, _reported_measure,
                       initial_grid)
from .finite_solver import FiniteProblem, solve_finite
from .measures import DiscreteMeasure, set_distance
from .problem import Problem
from .sliding import Parameterization, SlideConfig, run_sliding

__all__ = ["HybridConfig", "HybridResult", "run_hybrid", "HYBRID_METRICS_HEADER"]

HYBRID_METRICS_HEADER = [
    "k", "J", "J_hat", "grid_size", "Xk_size", "feas_excess",
    "dist_grid_xi", "dist_xi_Xk", "dist_Xk_xi", "q_err", "J_gap",
    "slide_iters", "post_slide_J",
]

NAN = float("nan")


@dataclass(frozen=True)
class HybridConfig:
    exchange: ExchangeConfig = field(default_factory=ExchangeConfig)
    slide: SlideConfig = field(default_factory=SlideConfig)
    slide_every: bool = True
    refit: bool = True
    feed_back: bool = True


@dataclass
class HybridOuterRecord:
    k: int
    grid: np.ndarray
    maximizers: np.ndarray
    dual: np.ndarray          # post-step dual (feasibility-rescaled)
    dual_scale: float
    measure: DiscreteMeasure  # post-step measure
    mu_hat: DiscreteMeasure | None
    metrics: MetricsRow
    slide_iters: int
    post_slide_J: float
    post_feas_excess: float
    atom_count: int
    solver_converged: bool


@dataclass
class HybridResult:
    measure: DiscreteMeasure
    dual: np.ndarray
    metrics: list
    records: list
    termination: str
    solver_flagged: bool
    config: HybridConfig

    @property
    def outer_iterations(self) -> int:
        return len(self.records)

    @property
    def atom_counts(self) -> list:
        return [r.atom_count for r in self.records]


def _count_atoms(mu: DiscreteMeasure) -> int:
    if mu.n_atoms == 0:
        return 0
    thresh = 1e-8 * max(1.0, float(np.abs(mu.amplitudes).max()))
    return int(np.sum(np.abs(mu.amplitudes) > thresh))


def run_hybrid(problem: Problem, cfg: HybridConfig | None = None,
               ground_truth=None) -> HybridResult:
    cfg = cfg or HybridConfig()
    ex = cfg.exchange
    op, fid = problem.operator, problem.fidelity
    diam = problem.domain.diameter
    mcfg: MaximizerConfig = ex.maximizer
    dedupe = mcfg.resolve(problem.domain).dedupe_radius
    gt = ground_truth if ground_truth is not None else problem.ground_truth

    grid = initial_grid(problem, ex.initial_grid)
    warm = None
    records: list[HybridOuterRecord] = []
    flagged = False
    termination = "max_iter"

    for k in range(ex.max_iter):
        rep = solve_finite(FiniteProblem(grid, op, fid), tol=ex.solver_tol,
                           max_iter=ex.solver_max_iter, warm_start=warm)
        flagged |= not rep.converged
        ext = find_maximizers(op, rep.dual, mcfg)
        if ex.rule == "single" and ext.points.shape[0] > 1:
            best = int(np.argmax(ext.values))
            ext = ExtractionResult(ext.points[best:best + 1],
                                   ext.values[best:best + 1], ext.scan_max)
        xk = ext.points
        feas_excess = ext.max_value - 1.0

        measure = _reported_measure(grid, rep.amplitudes, ex, diam)
        post_dual = rep.dual
        post_scale = rep.dual_scale
        slide_iters = 0
        mu_hat = None
        j_hat = NAN

        if xk.shape[0]:
            hat_rep = solve_finite(FiniteProblem(xk, op, fid), tol=ex.solver_tol,
                                   max_iter=ex.solver_max_iter)
            flagged |= not hat_rep.converged
            j_hat = hat_rep.primal_value
            mu_hat = _reported_measure(xk, hat_rep.amplitudes, ex, diam)
            keep = np.abs(hat_rep.amplitudes) > cfg.slide.eps_amp
            slid_positions = xk
            if cfg.slide_every and np.any(keep):
                start = Parameterization(hat_rep.amplitudes[keep], xk[keep])
                slide = run_sliding(start, op, fid, cfg.slide)
                slide_iters = slide.iterations
                slid_positions = slide.params.positions
                if cfg.refit:
                    refit_rep = solve_finite(
                        FiniteProblem(slid_positions, op, fid),
                        tol=ex.solver_tol, max_iter=ex.solver_max_iter,
                        warm_start=slide.params.amplitudes)
                    flagged |= not refit_rep.converged
                    measure = _reported_measure(slid_positions,
                                                refit_rep.amplitudes, ex, diam)
                    post_dual = refit_rep.dual
                    post_scale = refit_rep.dual_scale
                else:
                    measure = _reported_measure(slid_positions,
                                                slide.params.amplitudes, ex, diam)
                    z = op.forward_points(slide.params.positions,
                                          slide.params.amplitudes)
                    post_dual = fid.dual_candidate(z)
                    mtq = np.abs(op.design_t(slide.params.positions, post_dual))
                    post_scale = max(1.0, float(mtq.max(initial=0.0)))

        post_J = (float(np.sum(np.abs(measure.amplitudes)))
                  + fid.value(op.forward_points(measure.positions, measure.amplitudes))
                  if measure.n_atoms else fid.value(np.zeros(op.m)))

        row = MetricsRow(k=k, J=rep.primal_value, J_hat=j_hat,
                         grid_size=grid.shape[0], Xk_size=xk.shape[0],
                         feas_excess=feas_excess)
        if gt is not None and gt.measure.n_atoms:
            xi = gt.measure.positions
            row.dist_grid_xi = set_distance(grid, xi)
            if xk.shape[0]:
                row.dist_xi_Xk = set_distance(xi, xk)
                row.dist_Xk_xi = set_distance(xk, xi)

        # stopping rule on the post-slide dual
        post_ext = find_maximizers(op, post_dual, mcfg)
        post_feas = post_ext.max_value - 1.0
        stop = (post_ext.points.shape[0] == 0
                or float(post_ext.values.max()) - 1.0 <= ex.stop_feas_tol)

        records.append(HybridOuterRecord(
            k=k, grid=grid, maximizers=xk, dual=post_dual / post_scale,
            dual_scale=post_scale, measure=measure, mu_hat=mu_hat,
            metrics=row, slide_iters=slide_iters, post_slide_J=post_J,
            post_feas_excess=post_feas, atom_count=_count_atoms(measure),
            solver_converged=rep.converged))

        if stop:
            termination = "feasible"
            break

        new_points = [xk]
        if cfg.feed_back and measure.n_atoms:
            new_points.append(measure.positions)
        cand = np.vstack(new_points)
        dist = op.pairwise_dist(cand, grid)
        fresh = cand[dist.min(axis=1) > dedupe]
        if fresh.shape[0]:
            # drop near-duplicates among the fresh points themselves
            kept = []
            for x in fresh:
                if (not kept or
                        op.pairwise_dist(x[None, :], np.array(kept)).min() > dedupe):
                    kept.append(x)
            fresh = np.array(kept)
        if fresh.shape[0] == 0:
            termination = "stalled"
            break
        warm = np.concatenate([rep.amplitudes, np.zeros(fresh.shape[0])])
        grid = np.vstack([grid, fresh])

    last = records[-1]
    for rec in records:
        rec.metrics.J_gap = NAN
        rec.metrics.q_err = NAN
    return HybridResult(
        measure=last.measure,
        dual=last.dual,
        metrics=[r.metrics for r in records],
        records=records,
        termination=termination,
        solver_flagged=flagged,
        config=cfg,
    )
