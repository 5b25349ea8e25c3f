"""JSON schemas for measures, operators, problems and configs.

Measure files look like ``{"d": 1, "atoms": [{"x": [0.3], "a": 2.0}, ...]}``
(positions are always arrays, even in 1-d).  Operator specs are
``{"type": "fourier1d", "freqs": [-15, 14]}`` (inclusive frequency range) or
``{"type": "gauss2d", "grid_n": 64, "grid_box": [[-0.5, 0.5], [-0.5, 0.5]],
"sigma": 0.05}``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .certificate import Cell, MaximizerConfig
from .exchange import ExchangeConfig
from .fidelity import QuadraticFidelity
from .hybrid import HybridConfig
from .measures import DiscreteMeasure, Domain
from .operators import Fourier1D, Gaussian2D, MeasurementOperator
from .problem import GroundTruth, Problem
from .sliding import SlideConfig

__all__ = [
    "measure_to_dict", "measure_from_dict", "save_measure", "load_measure",
    "domain_to_dict", "domain_from_dict",
    "operator_to_dict", "operator_from_dict",
    "problem_to_dict", "problem_from_dict", "save_problem", "load_problem",
    "exchange_config_from_dict", "slide_config_from_dict",
    "hybrid_config_from_dict", "config_to_dict", "config_hash",
    "save_dual", "load_dual", "cells_to_dicts",
    "save_json", "load_json",
]


def save_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True))


def load_json(path):
    return json.loads(Path(path).read_text())


# -- measures ----------------------------------------------------------------

def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {
        "d": mu.dim,
        "atoms": [{"x": list(map(float, x)), "a": float(a)} for x, a in mu.atoms()],
    }


def measure_from_dict(d: dict) -> DiscreteMeasure:
    dim = int(d["d"])
    atoms = [(np.asarray(a["x"], dtype=float), float(a["a"])) for a in d["atoms"]]
    return DiscreteMeasure.from_atoms(atoms, dim)


def save_measure(path, mu: DiscreteMeasure) -> None:
    save_json(path, measure_to_dict(mu))


def load_measure(path) -> DiscreteMeasure:
    return measure_from_dict(load_json(path))


# -- domain / operator / fidelity ---------------------------------------------

def domain_to_dict(dom: Domain) -> dict:
    return {"lower": list(map(float, dom.lower)), "upper": list(map(float, dom.upper))}


def domain_from_dict(d: dict) -> Domain:
    return Domain(d["lower"], d["upper"])


def operator_to_dict(op: MeasurementOperator) -> dict:
    if isinstance(op, Fourier1D):
        k = op.freqs
        if not np.array_equal(k, np.arange(k.min(), k.max() + 1)):
            raise ValueError("only contiguous frequency ranges serialize")
        return {"type": "fourier1d", "freqs": [int(k.min()), int(k.max())]}
    if isinstance(op, Gaussian2D):
        return {
            "type": "gauss2d",
            "grid_n": op.grid_n,
            "grid_box": [list(b) for b in op.grid_box],
            "sigma": op.sigma,
        }
    raise TypeError(f"cannot serialize operator of type {type(op).__name__}")


def operator_from_dict(d: dict, domain: Domain) -> MeasurementOperator:
    kind = d["type"]
    if kind == "fourier1d":
        lo, hi = d["freqs"]
        return Fourier1D(np.arange(int(lo), int(hi) + 1), domain=domain)
    if kind == "gauss2d":
        return Gaussian2D(grid_n=int(d["grid_n"]), grid_box=d["grid_box"],
                          sigma=float(d["sigma"]), domain=domain)
    raise ValueError(f"unknown operator type {kind!r}")


def fidelity_to_dict(fid: QuadraticFidelity) -> dict:
    return {"type": "quadratic", "L": fid.L}


def fidelity_from_dict(d: dict, y: np.ndarray) -> QuadraticFidelity:
    if d["type"] != "quadratic":
        raise ValueError(f"unknown fidelity type {d['type']!r}")
    return QuadraticFidelity(y=y, L=float(d["L"]))


# -- problems ------------------------------------------------------------------

def problem_to_dict(problem: Problem) -> dict:
    out = {
        "domain": domain_to_dict(problem.domain),
        "operator": operator_to_dict(problem.operator),
        "fidelity": fidelity_to_dict(problem.fidelity),
        "y": [float(v) for v in problem.y],
    }
    if problem.ground_truth is not None:
        gt = {"measure": measure_to_dict(problem.ground_truth.measure)}
        if problem.ground_truth.noise_seed is not None:
            gt["noise_seed"] = int(problem.ground_truth.noise_seed)
        out["ground_truth"] = gt
    if problem.meta:
        out["meta"] = problem.meta
    return out


def problem_from_dict(d: dict) -> Problem:
    dom = domain_from_dict(d["domain"])
    op = operator_from_dict(d["operator"], dom)
    y = np.asarray(d["y"], dtype=float)
    fid = fidelity_from_dict(d["fidelity"], y)
    gt = None
    if "ground_truth" in d:
        gt = GroundTruth(
            measure=measure_from_dict(d["ground_truth"]["measure"]),
            noise_seed=d["ground_truth"].get("noise_seed"),
        )
    return Problem(operator=op, fidelity=fid, ground_truth=gt,
                   meta=d.get("meta", {}))


def save_problem(path, problem: Problem) -> None:
    save_json(path, problem_to_dict(problem))


def load_problem(path) -> Problem:
    return problem_from_dict(load_json(path))


# -- configs -------------------------------------------------------------------

def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _filtered(cls, d: dict) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return d


def maximizer_config_from_dict(d: dict) -> MaximizerConfig:
    return MaximizerConfig(**_filtered(MaximizerConfig, d))


def exchange_config_from_dict(d: dict) -> ExchangeConfig:
    d = dict(_filtered(ExchangeConfig, d))
    if "maximizer" in d and isinstance(d["maximizer"], dict):
        d["maximizer"] = maximizer_config_from_dict(d["maximizer"])
    return ExchangeConfig(**d)


def slide_config_from_dict(d: dict) -> SlideConfig:
    return SlideConfig(**_filtered(SlideConfig, d))


def hybrid_config_from_dict(d: dict) -> HybridConfig:
    d = dict(_filtered(HybridConfig, d))
    if "exchange" in d and isinstance(d["exchange"], dict):
        d["exchange"] = exchange_config_from_dict(d["exchange"])
    if "slide" in d and isinstance(d["slide"], dict):
        d["slide"] = slide_config_from_dict(d["slide"])
    return HybridConfig(**d)


def config_hash(cfg, extra: dict | None = None) -> str:
    payload = {"config": config_to_dict(cfg) if dataclasses.is_dataclass(cfg) else cfg}
    if extra:
        payload.update(extra)
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- misc ------------------------------------------------------------------------

def save_dual(path, q: np.ndarray) -> None:
    save_json(path, {"q": [float(v) for v in np.asarray(q).ravel()]})


def load_dual(path) -> np.ndarray:
    return np.asarray(load_json(path)["q"], dtype=float)


def cells_to_dicts(cells: list[Cell]) -> list[dict]:
    return [
        {"lower": list(map(float, c.lower)), "upper": list(map(float, c.upper))}
        for c in cells
    ]
