"""Experiment harness: problem generators, batch runner, basin study and the
theory-bound verifier.

Everything here is deterministic given explicit seeds: generators draw from
``numpy.random.default_rng(seed)``, noise uses a separate seed, and quantiles
use the nearest-rank definition so that re-runs (and reimplementations) agree
bit for bit on the aggregates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exchange import (METRICS_HEADER, ExchangeConfig, ExchangeResult,
                       attach_reference_metrics, run_exchange)
from .fidelity import QuadraticFidelity
from .hybrid import HYBRID_METRICS_HEADER, HybridConfig, HybridResult, run_hybrid
from .measures import DiscreteMeasure, Domain, set_distance, tv_norm
from .operators import Fourier1D, Gaussian2D, forward
from .problem import GroundTruth, Problem
from .serialize import (config_hash, config_to_dict, measure_to_dict,
                        problem_to_dict, save_json)
from .sliding import (Parameterization, SlideConfig, amplitude_error_bound,
                      run_sliding, transition_gram)

__all__ = [
    "gen_fourier1d",
    "gen_gauss2d",
    "BatchSpec",
    "run_batch",
    "write_run_dir",
    "basin_study",
    "BoundCheck",
    "BoundReport",
    "check_bounds",
    "nearest_rank",
]

NAN = float("nan")


# -- generators ----------------------------------------------------------------

def gen_fourier1d(seed: int, freq_count: int = 30, s: int = 5,
                  amp_low: float = 0.9, amp_high: float = 1.1,
                  jitter: float = 0.2, weight: float = 1000.0) -> Problem:
    """Noiseless 1-d super-resolution instance from low Fourier moments.

    s spikes sit at a jittered uniform grid with amplitudes of magnitude in
    [amp_low, amp_high] and random signs; y = A mu exactly.
    """
    if s >= freq_count:
        raise ValueError("need fewer spikes than frequencies for a recoverable instance")
    rng = np.random.default_rng(seed)
    freqs = np.arange(-(freq_count // 2), freq_count - freq_count // 2)
    op = Fourier1D(freqs)
    positions = (np.arange(s) + 0.5) / s + jitter / s * rng.uniform(-1.0, 1.0, size=s)
    amplitudes = rng.uniform(amp_low, amp_high, size=s) * rng.choice([-1.0, 1.0], size=s)
    mu = DiscreteMeasure(positions.reshape(-1, 1), amplitudes)
    y = forward(op, mu)
    fid = QuadraticFidelity(y=y, L=weight)
    meta = {
        "generator": "fourier1d", "seed": int(seed),
        "params": {"freq_count": freq_count, "s": s, "amp_low": amp_low,
                   "amp_high": amp_high, "jitter": jitter, "weight": weight},
    }
    return Problem(operator=op, fidelity=fid,
                   ground_truth=GroundTruth(measure=mu), meta=meta)


def gen_gauss2d(seed: int, grid_n: int = 64, sigma: float = 0.05, s: int = 11,
                noise_std: float | None = None, noise_rel: float = 0.01,
                noise_seed: int | None = None, pos_low: float = -0.4,
                pos_high: float = 0.4, amp_low: float = 0.5,
                amp_high: float = 1.5, weight: float = 10.0,
                domain=((-1.0, 1.0), (-1.0, 1.0))) -> Problem:
    """2-d super-resolution instance: Gaussian blur sampled on a grid plus noise.

    Positive amplitudes, positions uniform in the inner box; noise_std of None
    resolves to noise_rel * ||A mu||_inf, drawn with its own seed so the same
    measure can be paired with different noise realizations.
    """
    rng = np.random.default_rng(seed)
    dom = Domain([d[0] for d in domain], [d[1] for d in domain])
    op = Gaussian2D(grid_n=grid_n, sigma=sigma, domain=dom)
    positions = rng.uniform(pos_low, pos_high, size=(s, 2))
    amplitudes = rng.uniform(amp_low, amp_high, size=s)
    mu = DiscreteMeasure(positions, amplitudes)
    clean = forward(op, mu)
    if noise_std is None:
        noise_std = noise_rel * float(np.abs(clean).max())
    if noise_seed is None:
        noise_seed = int(seed) + 1_000_003
    noise = (np.random.default_rng(noise_seed).standard_normal(op.m) * noise_std
             if noise_std > 0 else np.zeros(op.m))
    fid = QuadraticFidelity(y=clean + noise, L=weight)
    meta = {
        "generator": "gauss2d", "seed": int(seed), "noise_seed": int(noise_seed),
        "params": {"grid_n": grid_n, "sigma": sigma, "s": s,
                   "noise_std": float(noise_std), "pos_low": pos_low,
                   "pos_high": pos_high, "amp_low": amp_low,
                   "amp_high": amp_high, "weight": weight},
    }
    return Problem(operator=op, fidelity=fid,
                   ground_truth=GroundTruth(measure=mu, noise_seed=noise_seed),
                   meta=meta)


GENERATORS = {"fourier1d": gen_fourier1d, "gauss2d": gen_gauss2d}


# -- run directories --------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_run_dir(out_dir, problem: Problem, result) -> None:
    """Persist a run: metrics.csv, final measure/dual, grids and history."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hybrid = isinstance(result, HybridResult)
    if hybrid:
        rows = [r.metrics.as_row() + [r.slide_iters, r.post_slide_J]
                for r in result.records]
        write_csv(out / "metrics.csv", HYBRID_METRICS_HEADER, rows)
        states = result.records
    else:
        write_csv(out / "metrics.csv", METRICS_HEADER,
                  [m.as_row() for m in result.metrics])
        states = result.states
    save_json(out / "measure_final.json", measure_to_dict(result.measure))
    save_json(out / "dual_final.json", {"q": [float(v) for v in result.dual]})
    save_json(out / "grids.json", {
        "omega": [[list(map(float, x)) for x in st.grid] for st in states],
        "Xk": [[list(map(float, x)) for x in st.maximizers] for st in states],
    })
    save_json(out / "history.json", {
        "q": [[float(v) for v in st.dual] for st in states],
        "dual_scale": [float(st.dual_scale) for st in states],
        "mu_hat": [measure_to_dict(st.mu_hat) if st.mu_hat is not None else None
                   for st in states],
        "termination": result.termination,
    })
    save_json(out / "problem.json", problem_to_dict(problem))
    save_json(out / "meta.json", {
        "config": config_to_dict(result.config),
        "config_hash": config_hash(result.config, extra=problem.meta),
        "seed": problem.meta.get("seed"),
        "generator": problem.meta.get("generator"),
        "rng": "numpy.random.default_rng (PCG64)",
        "solver_flagged": result.solver_flagged,
        "algorithm": "hybrid" if hybrid else "exchange",
    })


# -- batch runner ------------------------------------------------------------------

@dataclass
class BatchSpec:
    generator: str
    params: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: list(range(100)))
    algorithm: str = "exchange"
    config: object = None
    out_dir: object = None

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.algorithm not in ("exchange", "hybrid"):
            raise ValueError("algorithm must be 'exchange' or 'hybrid'")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")


def nearest_rank(sorted_vals: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: value at index ceil(pct/100 * n) (1-based)."""
    n = sorted_vals.size
    if n == 0:
        return NAN
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_vals[rank - 1])


def aggregate_metrics(per_run_rows: list, header) -> tuple[list, list]:
    """Per-iteration nearest-rank median / 5th / 95th percentile per column."""
    agg_header = ["k", "n"]
    value_cols = [c for c in header if c != "k"]
    for col in value_cols:
        agg_header += [f"{col}_p50", f"{col}_p05", f"{col}_p95"]
    max_k = max((len(rows) for rows in per_run_rows), default=0)
    out = []
    for k in range(max_k):
        rows_k = [rows[k] for rows in per_run_rows if len(rows) > k]
        rec = [k, len(rows_k)]
        for col in value_cols:
            idx = header.index(col)
            vals = np.array([float(r[idx]) for r in rows_k])
            vals = vals[~np.isnan(vals)]
            vals.sort()
            rec += [nearest_rank(vals, 50), nearest_rank(vals, 5),
                    nearest_rank(vals, 95)]
        out.append(rec)
    return agg_header, out


def run_batch(spec: BatchSpec):
    """Run one algorithm over the seed list; write per-run dirs + aggregate.csv.

    Returns (results, aggregate_rows).  Failed runs are recorded in
    failures.json and skipped in the aggregate.
    """
    gen = GENERATORS[spec.generator]
    out_root = Path(spec.out_dir) if spec.out_dir else None
    results = []
    per_run_rows = []
    failures = []
    header = HYBRID_METRICS_HEADER if spec.algorithm == "hybrid" else METRICS_HEADER
    for seed in spec.seeds:
        problem = gen(seed, **spec.params)
        try:
            if spec.algorithm == "exchange":
                cfg = spec.config or ExchangeConfig()
                res = run_exchange(problem, cfg)
                attach_reference_metrics(res)
                rows = [m.as_row() for m in res.metrics]
            else:
                cfg = spec.config or HybridConfig()
                res = run_hybrid(problem, cfg)
                rows = [r.metrics.as_row() + [r.slide_iters, r.post_slide_J]
                        for r in res.records]
        except Exception as exc:  # pragma: no cover - defensive
            failures.append({"seed": int(seed), "error": repr(exc)})
            continue
        results.append((seed, problem, res))
        per_run_rows.append(rows)
        if out_root is not None:
            write_run_dir(out_root / f"seed_{seed:04d}", problem, res)
    agg_header, agg_rows = aggregate_metrics(per_run_rows, header)
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        write_csv(out_root / "aggregate.csv", agg_header, agg_rows)
        save_json(out_root / "batch.json", {
            "generator": spec.generator, "params": spec.params,
            "seeds": [int(s) for s in spec.seeds], "algorithm": spec.algorithm,
            "config_hash": config_hash(spec.config or {}, extra=spec.params),
            "failures": failures,
        })
    return results, (agg_header, agg_rows)


# -- basin of attraction --------------------------------------------------------

def basin_study(problem: Problem, reference: Parameterization, gammas,
                runs_per_gamma: int, cfg: SlideConfig | None = None,
                seed: int = 0, success_tol: float = 1e-6):
    """Success rate of sliding descent from random relative perturbations.

    Each start is reference + delta with ||delta||_2 = gamma ||reference||_2;
    success means the descent lands within success_tol of the reference in the
    joint (amplitude, position) norm.  Returns rows (gamma, successes, runs).
    """
    cfg = cfg or SlideConfig(max_iter=1000)
    rng = np.random.default_rng(seed)
    ref = reference.flat()
    scale = float(np.linalg.norm(ref))
    p, d = reference.p, reference.dim
    rows = []
    for gamma in gammas:
        successes = 0
        for _ in range(runs_per_gamma):
            delta = rng.standard_normal(ref.size)
            norm = float(np.linalg.norm(delta))
            delta = delta / norm * gamma * scale if norm > 0 else delta
            start_vec = ref + delta
            start = Parameterization.from_flat(start_vec, p, d)
            start_pos = problem.domain.clip(start.positions)
            amps = start.amplitudes.copy()
            tiny = np.abs(amps) <= cfg.eps_amp
            if np.any(tiny):
                amps[tiny] = np.sign(reference.amplitudes[tiny]) * 2 * cfg.eps_amp
            res = run_sliding(Parameterization(amps, start_pos),
                              problem.operator, problem.fidelity, cfg)
            err = float(np.linalg.norm(res.params.flat() - ref))
            successes += err <= success_tol
        rows.append((float(gamma), int(successes), int(runs_per_gamma)))
    return rows


# -- bound verifier ----------------------------------------------------------------

@dataclass
class _LoadedState:
    """Per-iteration view of a persisted run, as check_bounds needs it."""
    metrics: object
    grid: np.ndarray
    maximizers: np.ndarray
    dual: np.ndarray
    dual_scale: float
    mu_hat: DiscreteMeasure | None


@dataclass
class _LoadedRun:
    states: list
    measure: DiscreteMeasure
    dual: np.ndarray
    config: ExchangeConfig
    termination: str


def load_run_dir(run_dir):
    """Reload a persisted exchange/hybrid run for offline bound checking."""
    import csv as _csv

    from .exchange import MetricsRow
    from .serialize import (exchange_config_from_dict, hybrid_config_from_dict,
                            load_json, load_measure, measure_from_dict,
                            load_problem)

    run = Path(run_dir)
    problem = load_problem(run / "problem.json")
    meta = load_json(run / "meta.json")
    grids = load_json(run / "grids.json")
    history = load_json(run / "history.json")
    with open(run / "metrics.csv", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, r)) for r in reader]
    states = []
    for i, row in enumerate(rows):
        m = MetricsRow(k=int(float(row["k"])))
        for name in ("J", "J_hat", "feas_excess", "dist_grid_xi",
                     "dist_xi_Xk", "dist_Xk_xi", "q_err", "J_gap"):
            setattr(m, name, float(row[name]))
        m.grid_size = int(float(row["grid_size"]))
        m.Xk_size = int(float(row["Xk_size"]))
        mu_hat_d = history["mu_hat"][i]
        states.append(_LoadedState(
            metrics=m,
            grid=np.asarray(grids["omega"][i], dtype=float),
            maximizers=np.asarray(grids["Xk"][i], dtype=float).reshape(-1, problem.domain.dim),
            dual=np.asarray(history["q"][i], dtype=float),
            dual_scale=float(history["dual_scale"][i]),
            mu_hat=measure_from_dict(mu_hat_d) if mu_hat_d is not None else None,
        ))
    cfg_d = meta["config"]
    if meta.get("algorithm") == "hybrid":
        cfg = hybrid_config_from_dict(cfg_d).exchange
    else:
        cfg = exchange_config_from_dict(cfg_d)
    run_obj = _LoadedRun(
        states=states,
        measure=load_measure(run / "measure_final.json"),
        dual=np.asarray(load_json(run / "dual_final.json")["q"], dtype=float),
        config=cfg,
        termination=history.get("termination", ""),
    )
    return problem, run_obj


@dataclass
class BoundCheck:
    name: str
    k: int
    lhs: float
    rhs: float
    ok: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass
class BoundReport:
    checks: list

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.ok]

    @property
    def n_checked(self) -> int:
        return len(self.checks)

    def summary(self) -> dict:
        by_name: dict = {}
        for c in self.checks:
            rec = by_name.setdefault(c.name, {"checked": 0, "violations": 0,
                                              "min_margin": float("inf")})
            rec["checked"] += 1
            rec["violations"] += 0 if c.ok else 1
            if not math.isnan(c.margin):
                rec["min_margin"] = min(rec["min_margin"], c.margin)
        return by_name


def check_bounds(problem: Problem, result, inflation: float = 1.05,
                 reference: dict | None = None) -> BoundReport:
    """Verify the a-posteriori inequalities on a completed run.

    Checked at every applicable iteration: the dual-radius bound
    ||q_k|| <= R, the feasibility growth bound
    ||A*q_k||_inf <= 1 + (R kappa_hess / 2) dist(Omega_k, X_k)^2, the
    simple-problem value bound against the reference optimum, and the
    amplitude stability bound.  Sampled operator constants are inflated by
    ``inflation``; every comparison gets a 10 * solver_tol slack.
    """
    op, fid = problem.operator, problem.fidelity
    consts = op.constants().inflated(inflation)
    R = fid.dual_radius()
    if isinstance(result, HybridResult):
        states = result.records
        tol = result.config.exchange.solver_tol
    else:
        states = result.states
        tol = result.config.solver_tol
    slack = 10.0 * tol

    if reference is None:
        reference = {}
    mu_star = reference.get("measure", result.measure)
    q_star = reference.get("dual", result.dual)
    j_values = [st.metrics.J for st in states]
    j_hat_values = [st.metrics.J_hat for st in states
                    if not math.isnan(st.metrics.J_hat)]
    j_star = reference.get(
        "J", min(min(j_values), min(j_hat_values, default=float("inf"))))
    gt = problem.ground_truth
    xi = gt.measure.positions if gt is not None and gt.measure.n_atoms else (
        states[-1].maximizers if states[-1].maximizers is not None else None)
    s_true = mu_star.n_atoms

    alpha_star_l1 = tv_norm(mu_star)
    q_star_norm = float(np.linalg.norm(q_star))
    gamma = None
    if s_true and mu_star.n_atoms == np.unique(mu_star.positions, axis=0).shape[0]:
        gamma = transition_gram(op, mu_star.positions).gamma

    checks: list[BoundCheck] = []
    first_full = None
    for st in states:
        k = st.metrics.k
        qn = float(np.linalg.norm(st.dual))
        checks.append(BoundCheck("dual_radius", k, qn, R + slack, qn <= R + slack))

        if st.maximizers is not None and st.maximizers.shape[0]:
            d_grid_xk = set_distance(st.grid, st.maximizers)
            lhs = (1.0 + st.metrics.feas_excess) / st.dual_scale
            rhs = 1.0 + 0.5 * R * consts.kappa_hess * d_grid_xk**2 + slack
            checks.append(BoundCheck("feasibility_growth", k, lhs, rhs, lhs <= rhs))

        if (xi is not None and st.maximizers is not None
                and st.maximizers.shape[0] == s_true and s_true > 0):
            if first_full is None:
                first_full = k
            tau = set_distance(st.maximizers, xi)
            if not math.isnan(st.metrics.J_hat):
                coeff = (alpha_star_l1 * 0.5 * consts.kappa_hess * q_star_norm
                         + 0.5 * fid.L * alpha_star_l1**2 * consts.kappa_grad**2)
                lhs = st.metrics.J_hat
                rhs = j_star + coeff * tau**2 + slack
                checks.append(BoundCheck("simple_problem_value", k, lhs, rhs,
                                         lhs <= rhs))
            if (st.mu_hat is not None and gamma is not None and gamma > 0
                    and st.mu_hat.n_atoms == s_true):
                try:
                    lhs, rhs = amplitude_error_bound(
                        st.mu_hat, mu_star, op, fid, gamma=gamma,
                        kappa_grad=consts.kappa_grad, j_star=j_star)
                except ValueError:
                    continue
                checks.append(BoundCheck("amplitude_error", k, lhs,
                                         rhs + slack, lhs <= rhs + slack))
    return BoundReport(checks=checks)
