"""Command line interface.

Subcommands: gen, exchange, slide, hybrid, batch, basin, certify,
check-bounds.  Configs are JSON files, metrics are CSV with fixed headers.
Exit codes: 0 success, 2 a solver flagged non-convergence somewhere, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize as ser
from .certificate import certified_maximizers, tile_domain
from .exchange import ExchangeConfig, attach_reference_metrics, run_exchange
from .harness import (BatchSpec, basin_study, check_bounds, gen_fourier1d,
                      gen_gauss2d, run_batch, write_csv, write_run_dir)
from .hybrid import HybridConfig, run_hybrid
from .problem import Problem
from .sliding import Parameterization, SlideConfig, run_sliding

__all__ = ["main"]


def _load_cfg(path, loader, default):
    if path is None:
        return default
    return loader(ser.load_json(path))


def _cmd_gen(args) -> int:
    if args.kind == "fourier1d":
        problem = gen_fourier1d(args.seed, freq_count=args.freq_count, s=args.sparsity,
                                jitter=args.jitter, weight=args.weight)
    else:
        problem = gen_gauss2d(args.seed, grid_n=args.grid_n, sigma=args.sigma,
                              s=args.sparsity2, noise_rel=args.noise_rel,
                              noise_std=args.noise_std, weight=args.weight2,
                              noise_seed=args.noise_seed)
    ser.save_problem(args.out, problem)
    print(f"wrote {args.out}")
    return 0


def _cmd_exchange(args) -> int:
    problem = ser.load_problem(args.problem)
    cfg = _load_cfg(args.config, ser.exchange_config_from_dict, ExchangeConfig())
    result = run_exchange(problem, cfg)
    attach_reference_metrics(result)
    write_run_dir(args.out, problem, result)
    print(f"exchange: {len(result.metrics)} iterations, "
          f"termination={result.termination}, J={result.metrics[-1].J:.6g}")
    return 2 if result.solver_flagged else 0


def _cmd_hybrid(args) -> int:
    problem = ser.load_problem(args.problem)
    cfg = _load_cfg(args.config, ser.hybrid_config_from_dict, HybridConfig())
    if args.no_refit:
        cfg = HybridConfig(exchange=cfg.exchange, slide=cfg.slide,
                           slide_every=cfg.slide_every, refit=False,
                           feed_back=cfg.feed_back)
    result = run_hybrid(problem, cfg)
    write_run_dir(args.out, problem, result)
    print(f"hybrid: {result.outer_iterations} outer iterations, "
          f"termination={result.termination}, atoms={result.atom_counts[-1]}")
    return 2 if result.solver_flagged else 0


def _cmd_slide(args) -> int:
    problem = ser.load_problem(args.problem)
    mu = ser.load_measure(args.init)
    cfg = _load_cfg(args.config, ser.slide_config_from_dict, SlideConfig())
    res = run_sliding(Parameterization.from_measure(mu), problem.operator,
                      problem.fidelity, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "g_history.csv", ["iteration", "G", "grad_norm", "step"],
              res.g_history)
    ser.save_measure(out / "measure_final.json", res.params.measure())
    print(f"slide: {res.iterations} iterations, status={res.status}, "
          f"G={res.final_value:.9g}")
    return 2 if res.status == "ls_failed" else 0


def _cmd_batch(args) -> int:
    spec_dict = ser.load_json(args.spec)
    algorithm = spec_dict.get("algorithm", "exchange")
    cfg = None
    if "config" in spec_dict:
        loader = (ser.hybrid_config_from_dict if algorithm == "hybrid"
                  else ser.exchange_config_from_dict)
        cfg = loader(spec_dict["config"])
    spec = BatchSpec(
        generator=spec_dict["generator"],
        params=spec_dict.get("params", {}),
        seeds=spec_dict.get("seeds", list(range(100))),
        algorithm=algorithm,
        config=cfg,
        out_dir=args.out or spec_dict.get("out_dir"),
    )
    results, _ = run_batch(spec)
    flagged = any(res.solver_flagged for _, _, res in results)
    print(f"batch: {len(results)}/{len(spec.seeds)} runs completed")
    return 2 if flagged else 0


def _cmd_basin(args) -> int:
    problem = ser.load_problem(args.problem)
    ref = Parameterization.from_measure(ser.load_measure(args.reference))
    cfg = _load_cfg(args.config, ser.slide_config_from_dict,
                    SlideConfig(max_iter=1000))
    gammas = [float(g) for g in args.gammas.split(",")]
    rows = basin_study(problem, ref, gammas, args.runs, cfg, seed=args.seed,
                       success_tol=args.success_tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "basin.csv", ["gamma", "successes", "runs"], rows)
    for gamma, successes, runs in rows:
        print(f"gamma={gamma:g}: {successes}/{runs}")
    return 0


def _cmd_certify(args) -> int:
    problem = ser.load_problem(args.problem)
    q = ser.load_dual(args.dual)
    op = problem.operator
    kappa_hess = op.constants().inflated().kappa_hess
    cells = tile_domain(problem.domain, args.start_n)
    confirmed, undecided = certified_maximizers(
        op, q, cells, kappa_hess, diam_tol=args.diam_tol, margin=args.margin)
    print(json.dumps({
        "confirmed": ser.cells_to_dicts(confirmed),
        "undecided": ser.cells_to_dicts(undecided),
    }, indent=1))
    return 0


def _cmd_check_bounds(args) -> int:
    from .harness import load_run_dir

    problem, result = load_run_dir(args.run)
    report = check_bounds(problem, result, inflation=args.inflation)
    print(json.dumps({
        "checked": report.n_checked,
        "violations": len(report.violations),
        "by_bound": report.summary(),
    }, indent=1, default=str))
    return 0 if not report.violations else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tvx",
                                 description="Exchange and sliding solvers for "
                                             "TV-regularized measure recovery")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a problem instance")
    gsub = g.add_subparsers(dest="kind", required=True)
    g1 = gsub.add_parser("fourier1d")
    g1.add_argument("--seed", type=int, default=0)
    g1.add_argument("--freq-count", dest="freq_count", type=int, default=30)
    g1.add_argument("--sparsity", type=int, default=5)
    g1.add_argument("--jitter", type=float, default=0.2)
    g1.add_argument("--weight", type=float, default=1000.0)
    g1.add_argument("--out", required=True)
    g1.set_defaults(func=_cmd_gen)
    g2 = gsub.add_parser("gauss2d")
    g2.add_argument("--seed", type=int, default=0)
    g2.add_argument("--grid-n", dest="grid_n", type=int, default=64)
    g2.add_argument("--sigma", type=float, default=0.05)
    g2.add_argument("--sparsity", dest="sparsity2", type=int, default=11)
    g2.add_argument("--noise-rel", dest="noise_rel", type=float, default=0.01)
    g2.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    g2.add_argument("--noise-seed", dest="noise_seed", type=int, default=None)
    g2.add_argument("--weight", dest="weight2", type=float, default=10.0)
    g2.add_argument("--out", required=True)
    g2.set_defaults(func=_cmd_gen)

    e = sub.add_parser("exchange", help="run the exchange algorithm")
    e.add_argument("--problem", required=True)
    e.add_argument("--config", default=None)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_exchange)

    h = sub.add_parser("hybrid", help="run the alternating method")
    h.add_argument("--problem", required=True)
    h.add_argument("--config", default=None)
    h.add_argument("--no-refit", action="store_true")
    h.add_argument("--out", required=True)
    h.set_defaults(func=_cmd_hybrid)

    s = sub.add_parser("slide", help="gradient descent on amplitudes/positions")
    s.add_argument("--problem", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_slide)

    b = sub.add_parser("batch", help="run a seed batch and aggregate quantiles")
    b.add_argument("--spec", required=True)
    b.add_argument("--out", default=None)
    b.set_defaults(func=_cmd_batch)

    ba = sub.add_parser("basin", help="basin-of-attraction study")
    ba.add_argument("--problem", required=True)
    ba.add_argument("--reference", required=True)
    ba.add_argument("--gammas", default="0.01,0.02,0.05")
    ba.add_argument("--runs", type=int, default=50)
    ba.add_argument("--seed", type=int, default=0)
    ba.add_argument("--success-tol", dest="success_tol", type=float, default=1e-6)
    ba.add_argument("--config", default=None)
    ba.add_argument("--out", required=True)
    ba.set_defaults(func=_cmd_basin)

    c = sub.add_parser("certify", help="certified maximizer localization")
    c.add_argument("--problem", required=True)
    c.add_argument("--dual", required=True)
    c.add_argument("--diam-tol", dest="diam_tol", type=float, default=1e-5)
    c.add_argument("--margin", type=float, default=0.1)
    c.add_argument("--start-n", dest="start_n", type=int, default=8)
    c.set_defaults(func=_cmd_certify)

    cb = sub.add_parser("check-bounds", help="verify a-posteriori bounds on a run")
    cb.add_argument("--run", required=True)
    cb.add_argument("--inflation", type=float, default=1.05)
    cb.set_defaults(func=_cmd_check_bounds)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
