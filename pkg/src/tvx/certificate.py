"""Dual-certificate analysis: maximizer extraction, certified cell bounds,
and non-degeneracy diagnostics.

The refinement set consists of the local maximizers of |A*q| that come close
to or exceed the unit level.  Two routes are provided: a scan + gradient
ascent heuristic (fast, used by the exchange loop) and a branch-and-bound
cell subdivision with second-order Taylor sandwich bounds (slow, certified).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .measures import Domain, as_points
from .operators import MeasurementOperator

__all__ = [
    "MaximizerConfig",
    "ExtractionResult",
    "extract_maximizers",
    "find_maximizers",
    "Cell",
    "tile_domain",
    "cell_bounds",
    "certified_maximizers",
    "CellBudgetError",
    "NondegeneracyReport",
    "nondegeneracy_report",
]


@dataclass(frozen=True)
class MaximizerConfig:
    """Tuning of the scan + ascent extractor.

    scan_n / dedupe_radius of None resolve to per-dimension defaults
    (1024 resp. 128 points per axis; 1e-7 times the domain diameter -- the
    dedupe radius doubles as the grid-admission guard, so it carves the floor
    below which the exchange grid cannot refine).
    """

    scan_n: int | None = None
    eps1: float = 0.1        # keep scan peaks with |A*q| > 1 - eps1
    eps2: float = 1e-4       # drop ascended points with |A*q| <= 1 - eps2
    ascent_grad_tol: float = 1e-10
    ascent_max_steps: int = 200
    dedupe_radius: float | None = None

    def resolve(self, domain: Domain) -> "MaximizerConfig":
        scan = self.scan_n if self.scan_n is not None else (1024 if domain.dim == 1 else 128)
        radius = self.dedupe_radius if self.dedupe_radius is not None \
            else 1e-7 * domain.diameter
        cfg = replace(self, scan_n=scan, dedupe_radius=radius)
        if not (0.0 < cfg.eps2 <= cfg.eps1 < 1.0):
            raise ValueError("need 0 < eps2 <= eps1 < 1")
        if cfg.scan_n < 2:
            raise ValueError("scan_n must be >= 2")
        return cfg


@dataclass
class ExtractionResult:
    points: np.ndarray   # (k, d), lexicographically sorted
    values: np.ndarray   # |A*q| at the points
    scan_max: float      # max of |A*q| over the scan grid

    @property
    def max_value(self) -> float:
        """Best lower bound on ||A*q||_inf seen by the extractor."""
        if self.values.size:
            return max(float(self.values.max()), self.scan_max)
        return self.scan_max


def _scan_axes(op: MeasurementOperator, n: int) -> list[np.ndarray]:
    axes = []
    for ax in range(op.domain.dim):
        lo, hi = op.domain.lower[ax], op.domain.upper[ax]
        if op.periodic[ax]:
            axes.append(lo + (hi - lo) * np.arange(n) / n)
        else:
            axes.append(np.linspace(lo, hi, n))
    return axes


def _local_peaks(vals: np.ndarray, periodic) -> np.ndarray:
    """Boolean mask of grid points strictly above every Moore neighbor."""
    padded = vals
    for ax, per in enumerate(periodic):
        width = [(1, 1) if a == ax else (0, 0) for a in range(vals.ndim)]
        if per:
            padded = np.pad(padded, width, mode="wrap")
        else:
            padded = np.pad(padded, width, mode="constant", constant_values=-np.inf)
    mask = np.ones(vals.shape, dtype=bool)
    center = tuple(slice(1, 1 + s) for s in vals.shape)
    for offset in itertools.product((-1, 0, 1), repeat=vals.ndim):
        if all(o == 0 for o in offset):
            continue
        nb = tuple(slice(1 + o, 1 + o + s) for o, s in zip(offset, vals.shape))
        mask &= vals > padded[nb]
    del center
    return mask


def _ascend_batch(op: MeasurementOperator, q: np.ndarray, seeds: np.ndarray,
                  signs: np.ndarray, step0: float, grad_tol: float,
                  max_steps: int):
    """Backtracking gradient ascent on sgn * A*q, all candidates at once.

    Candidates whose certificate value crosses zero are abandoned (the |.|
    landscape is non-smooth there and such points sit far below the unit
    level anyway).  Returns (points, alive_mask).
    """
    x = seeds.copy()
    n = x.shape[0]
    sgn = signs.astype(float)
    val = sgn * op.cert_value(q, x)
    t = np.full(n, step0)
    alive = np.ones(n, dtype=bool)     # not aborted by a sign flip
    moving = alive.copy()              # still above grad_tol with step budget
    for _ in range(max_steps + 40):
        idx = np.flatnonzero(alive & moving)
        if idx.size == 0:
            break
        g = sgn[idx, None] * op.cert_grad(q, x[idx])
        gn = np.linalg.norm(g, axis=1)
        done = gn <= grad_tol
        moving[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            continue
        g, gn = g[~done], gn[~done]
        trial = op.wrap(x[idx] + t[idx, None] * g)
        tval = sgn[idx] * op.cert_value(q, trial)
        ok = tval >= val[idx] + 0.5 * t[idx] * gn * gn
        acc = idx[ok]
        x[acc] = trial[ok]
        val[acc] = tval[ok]
        t[acc] = np.minimum(t[acc] * 2.0, step0)
        rej = idx[~ok]
        t[rej] *= 0.5
        moving[rej[t[rej] < step0 * 2.0**-40]] = False
        flipped = acc[val[acc] < 0]
        alive[flipped] = False
    return x, alive


def find_maximizers(op: MeasurementOperator, q: np.ndarray,
                    cfg: MaximizerConfig | None = None) -> ExtractionResult:
    """Scan, ascend and deduplicate the near-unit local maximizers of |A*q|."""
    cfg = (cfg or MaximizerConfig()).resolve(op.domain)
    q = np.asarray(q, dtype=float)
    d = op.domain.dim

    axes = _scan_axes(op, cfg.scan_n)
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    raw = op.cert_value(q, grid)
    vals = np.abs(raw).reshape([cfg.scan_n] * d)
    scan_max = float(vals.max())

    peaks = _local_peaks(vals, op.periodic) & (vals > 1.0 - cfg.eps1)
    seeds = grid[peaks.ravel()]
    signs = np.sign(raw[peaks.ravel()])

    qn = float(np.linalg.norm(q))
    kh = op.constants().inflated().kappa_hess
    step0 = op.domain.diameter
    if kh * qn > 1e-300:
        step0 = min(step0, 1.0 / (kh * qn))

    nz = signs != 0
    seeds, signs = seeds[nz], signs[nz]
    if seeds.shape[0] == 0:
        return ExtractionResult(np.zeros((0, d)), np.zeros(0), scan_max)
    pts, alive = _ascend_batch(op, q, seeds, signs, step0,
                               cfg.ascent_grad_tol, cfg.ascent_max_steps)
    pts = pts[alive]
    if pts.shape[0] == 0:
        return ExtractionResult(np.zeros((0, d)), np.zeros(0), scan_max)
    vs = np.abs(op.cert_value(q, pts))

    # dedupe keeping the highest value in each cluster (wrap-aware metric)
    order = np.argsort(-vs, kind="stable")
    keep_pts, keep_vals = [], []
    for i in order:
        if (not keep_pts or
                op.pairwise_dist(pts[i][None, :], np.array(keep_pts)).min()
                > cfg.dedupe_radius):
            keep_pts.append(pts[i])
            keep_vals.append(vs[i])
    pts = np.array(keep_pts)
    vs = np.array(keep_vals)

    survive = vs > 1.0 - cfg.eps2
    pts, vs = pts[survive], vs[survive]
    if pts.shape[0]:
        order = np.lexsort(pts.T[::-1])
        pts, vs = pts[order], vs[order]
    return ExtractionResult(pts, vs, scan_max)


def extract_maximizers(op: MeasurementOperator, q: np.ndarray,
                       cfg: MaximizerConfig | None = None) -> np.ndarray:
    """The point set X of near-unit local maximizers of |A*q| (sorted)."""
    return find_maximizers(op, q, cfg).points


# --------------------------------------------------------------------------
# certified route: Taylor sandwich bounds on axis-aligned cells


@dataclass(frozen=True)
class Cell:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if np.any(lo >= hi):
            raise ValueError("cell requires lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def vertices(self) -> np.ndarray:
        corners = itertools.product(*zip(self.lower, self.upper))
        return np.array(list(corners))

    def split(self) -> list["Cell"]:
        mid = self.center
        cells = []
        for choice in itertools.product((0, 1), repeat=self.dim):
            lo = np.where(np.array(choice) == 0, self.lower, mid)
            hi = np.where(np.array(choice) == 0, mid, self.upper)
            cells.append(Cell(lo, hi))
        return cells

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


class CellBudgetError(RuntimeError):
    """Subdivision exceeded the cell budget; partial results attached."""

    def __init__(self, confirmed, undecided):
        super().__init__("cell budget exceeded during certified subdivision")
        self.confirmed = confirmed
        self.undecided = undecided


def tile_domain(domain: Domain, n_per_axis: int = 1) -> list[Cell]:
    """Partition the domain box into n^d congruent cells."""
    axes = [np.linspace(lo, hi, n_per_axis + 1)
            for lo, hi in zip(domain.lower, domain.upper)]
    cells = []
    for idx in itertools.product(range(n_per_axis), repeat=domain.dim):
        lo = np.array([axes[a][i] for a, i in enumerate(idx)])
        hi = np.array([axes[a][i + 1] for a, i in enumerate(idx)])
        cells.append(Cell(lo, hi))
    return cells


def _interval_peak(g: float, c: float, a: float, b: float) -> float:
    """max of g*t - c*t^2 over t in [a, b] (c >= 0)."""
    best = max(g * a - c * a * a, g * b - c * b * b)
    if c > 0:
        ts = g / (2.0 * c)
        if a < ts < b:
            best = max(best, g * ts - c * ts * ts)
    return best


def cell_bounds(op: MeasurementOperator, q: np.ndarray, cell: Cell,
                kappa_hess: float):
    """Certified sandwich I_minus <= sup_{x in cell} |A*q(x)| <= I_plus.

    Anchored at every cell vertex: the quadratic minorant
    s*(v0 + <g0, x-x0>) - c||x-x0||^2 (s either sign) is maximized exactly
    over the box for the lower bound; the convex majorant attains its box
    maximum at a vertex, giving the upper bound.  c = kappa_hess ||q||_2 / 2.
    """
    q = np.asarray(q, dtype=float)
    c = 0.5 * kappa_hess * float(np.linalg.norm(q))
    verts = cell.vertices()
    vals = op.cert_value(q, verts)
    grads = op.cert_grad(q, verts)

    i_minus = -np.inf
    i_plus = np.inf
    nv = verts.shape[0]
    for k in range(nv):
        x0, v0, g0 = verts[k], float(vals[k]), grads[k]
        lo = cell.lower - x0
        hi = cell.upper - x0
        upper_best = -np.inf
        for s in (1.0, -1.0):
            # exact box max of the concave minorant, separable per axis
            minorant = s * v0 + sum(
                _interval_peak(s * g0[ax], c, lo[ax], hi[ax])
                for ax in range(cell.dim)
            )
            i_minus = max(i_minus, minorant)
            # convex majorant: box max sits at a vertex
            dv = verts - x0
            lin = s * (v0 + dv @ g0)
            upper_best = max(upper_best, float((lin + c * (dv * dv).sum(axis=1)).max()))
        i_plus = min(i_plus, upper_best)
    return float(i_minus), float(i_plus)


def certified_maximizers(op: MeasurementOperator, q: np.ndarray,
                         start_cells, kappa_hess: float, diam_tol: float,
                         margin: float = 0.1, max_cells: int = 500_000):
    """Branch-and-bound localization of {x : |A*q(x)| >= 1}.

    Discards a cell only when its certified upper bound falls below
    1 - margin * 2^-depth, so every point with |A*q| >= 1 ends up inside a
    returned cell.  Returns (confirmed, undecided): confirmed cells have a
    certified lower bound >= 1, undecided ones are merely small.
    """
    if diam_tol <= 0:
        raise ValueError("diam_tol must be > 0")
    confirmed: list[Cell] = []
    undecided: list[Cell] = []
    queue = deque((cell, 0) for cell in start_cells)
    processed = 0
    while queue:
        cell, depth = queue.popleft()
        processed += 1
        if processed > max_cells:
            raise CellBudgetError(confirmed, undecided)
        i_minus, i_plus = cell_bounds(op, q, cell, kappa_hess)
        eps_k = margin * 0.5**depth
        if i_plus <= 1.0 - eps_k:
            continue
        if cell.diam <= diam_tol:
            (confirmed if i_minus >= 1.0 else undecided).append(cell)
        else:
            queue.extend((child, depth + 1) for child in cell.split())
    return confirmed, undecided


# --------------------------------------------------------------------------
# non-degeneracy diagnostics


@dataclass
class NondegeneracyReport:
    curvatures: np.ndarray   # smallest eigenvalue of -sgn (A*q)'' at each spike
    gamma_hat: float
    tau0_hat: float          # nan when no radius in the grid qualifies
    saturation_count: int
    degenerate: bool


def _ring_offsets(dim: int, n_ring: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    angles = 2.0 * np.pi * np.arange(n_ring) / n_ring
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def nondegeneracy_report(op: MeasurementOperator, q_star: np.ndarray, xi,
                         tau_grid=None, n_ring: int = 16,
                         scan_n: int | None = None) -> NondegeneracyReport:
    """Estimate the curvature constant gamma and the largest radius tau0 for
    which the certificate is uniformly concave near the spikes and uniformly
    below one away from them (sampled check, not a proof)."""
    xi = as_points(xi, op.domain.dim)
    if xi.shape[0] == 0:
        raise ValueError("xi must be non-empty")
    q = np.asarray(q_star, dtype=float)

    vals_xi = op.cert_value(q, xi)
    signs = np.sign(vals_xi)
    signs[signs == 0] = 1.0
    hess = op.cert_hess(q, xi)
    curv = np.array([
        float(np.linalg.eigvalsh(-s * H).min()) for s, H in zip(signs, hess)
    ])
    gamma_hat = float(curv.min())

    ext = find_maximizers(op, q)
    saturation = int(np.sum(ext.values >= 1.0 - 1e-6)) if ext.values.size else 0

    if tau_grid is None:
        diam = op.domain.diameter
        tau_grid = np.geomspace(1e-3 * diam, 0.25 * diam, 12)
    tau_grid = np.sort(np.asarray(tau_grid, dtype=float))

    n = scan_n if scan_n is not None else (256 if op.domain.dim == 1 else 64)
    axes = _scan_axes(op, n)
    mesh = np.meshgrid(*axes, indexing="ij")
    scan = np.stack([m.ravel() for m in mesh], axis=1)
    scan_vals = np.abs(op.cert_value(q, scan))
    dist_to_xi = np.min(
        np.linalg.norm(scan[:, None, :] - xi[None, :, :], axis=2), axis=1
    )

    offsets = _ring_offsets(op.domain.dim, n_ring)
    fracs = np.array([0.25, 0.5, 0.75, 1.0])
    tau0 = float("nan")
    if gamma_hat > 0:
        for tau in tau_grid:
            ok = True
            gamma_ball = np.inf
            ball_val_min = np.inf
            for i in range(xi.shape[0]):
                pts = xi[i][None, :] + tau * fracs[:, None, None] * offsets[None, :, :]
                pts = op.wrap(pts.reshape(-1, op.domain.dim))
                h = op.cert_hess(q, pts)
                v = op.cert_value(q, pts)
                for H in h:
                    gamma_ball = min(gamma_ball, float(np.linalg.eigvalsh(-signs[i] * H).min()))
                ball_val_min = min(ball_val_min, float((signs[i] * v).min()))
            if gamma_ball <= 0:
                ok = False
            else:
                level = 0.5 * gamma_ball * tau * tau
                if ball_val_min < level - 1e-12:
                    ok = False
                far = scan_vals[dist_to_xi >= tau]
                if far.size and far.max() > 1.0 - level + 1e-12:
                    ok = False
            if ok:
                tau0 = float(tau)
    return NondegeneracyReport(
        curvatures=curv,
        gamma_hat=gamma_hat,
        tau0_hat=tau0,
        saturation_count=saturation,
        degenerate=not (gamma_hat > 0),
    )
