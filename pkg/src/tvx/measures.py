"""Domains, point sets and discrete (atomic) measures.

Positions are always stored as float64 arrays of shape ``(n, d)``, even for
d = 1; amplitudes as arrays of shape ``(n,)``.  All objects are immutable
after construction and every operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "DomainError",
    "DiscreteMeasure",
    "as_points",
    "tv_norm",
    "set_distance",
    "merge_atoms",
]


class DomainError(ValueError):
    """A point lies outside the domain of an operator or measure."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d, d in {1, 2} for the shipped operators."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("domain bounds must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("domain requires lower < upper on every axis")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, points, tol: float = 1e-9) -> bool:
        pts = as_points(points, self.dim)
        return bool(
            np.all(pts >= self.lower - tol) and np.all(pts <= self.upper + tol)
        )

    def check(self, points, tol: float = 1e-9) -> np.ndarray:
        """Return points as an (n, d) array, raising DomainError if any is outside."""
        pts = as_points(points, self.dim)
        if not self.contains(pts, tol):
            bad = pts[
                np.any((pts < self.lower - tol) | (pts > self.upper + tol), axis=1)
            ]
            raise DomainError(f"point {bad[0]} outside domain [{self.lower}, {self.upper}]")
        return pts

    def clip(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        return np.clip(pts, self.lower, self.upper)

    def grid_axes(self, n: int, cell_centers: bool = False) -> list[np.ndarray]:
        """n uniformly spaced coordinates per axis (endpoints included unless centered)."""
        if cell_centers:
            return [
                lo + (np.arange(n) + 0.5) * (hi - lo) / n
                for lo, hi in zip(self.lower, self.upper)
            ]
        return [np.linspace(lo, hi, n) for lo, hi in zip(self.lower, self.upper)]


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Normalize scalars / lists / arrays to an (n, d) float array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # interpret as n points in 1d unless dim says otherwise
        if dim is not None and dim > 1:
            if pts.size != dim:
                raise ValueError(f"cannot interpret shape {pts.shape} as points in R^{dim}")
            pts = pts.reshape(1, dim)
        else:
            pts = pts.reshape(-1, 1)
    elif pts.ndim != 2:
        raise ValueError(f"points must be at most 2-d, got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finite sum of weighted Dirac masses, mu = sum_i a_i * delta_{x_i}."""

    positions: np.ndarray  # (n, d)
    amplitudes: np.ndarray  # (n,)

    def __post_init__(self):
        pos = as_points(self.positions)
        amp = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        if amp.ndim != 1 or amp.size != pos.shape[0]:
            raise ValueError("amplitudes must be one scalar per position")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "amplitudes", _frozen(amp))

    @classmethod
    def empty(cls, dim: int) -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_atoms(cls, atoms, dim: int | None = None) -> "DiscreteMeasure":
        """Build from an iterable of (position, amplitude) pairs."""
        atoms = list(atoms)
        if not atoms:
            if dim is None:
                raise ValueError("dim required for an empty measure")
            return cls.empty(dim)
        pos = as_points([a[0] for a in atoms], dim)
        amp = np.array([a[1] for a in atoms], dtype=float)
        return cls(pos, amp)

    @property
    def n_atoms(self) -> int:
        return self.amplitudes.size

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def atoms(self):
        return [(self.positions[i].copy(), float(self.amplitudes[i])) for i in range(self.n_atoms)]

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions, c * self.amplitudes)


def tv_norm(mu: DiscreteMeasure) -> float:
    """Total variation of an atomic measure: sum of |amplitudes|."""
    return float(np.sum(np.abs(mu.amplitudes)))


def set_distance(p, q) -> float:
    """Asymmetric set distance sup_{y in Q} inf_{x in P} ||x - y||_2.

    Measures how well P covers Q; it is not symmetric in its arguments.
    """
    P = as_points(p)
    Q = as_points(q, P.shape[1] if P.size else None)
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise ValueError("set_distance is undefined for empty sets")
    diff = P[None, :, :] - Q[:, None, :]  # (|Q|, |P|, d)
    dists = np.linalg.norm(diff, axis=2)
    return float(dists.min(axis=1).max())


def merge_atoms(mu: DiscreteMeasure, radius: float, prune: float = 0.0) -> DiscreteMeasure:
    """Greedily union atoms closer than ``radius``; drop |amplitude| <= prune.

    Merged amplitude is the sum; merged position the |amplitude|-weighted
    mean.  Passes repeat until no pair is within ``radius``, which makes the
    operation idempotent and guarantees pairwise distances > radius.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    pos, amp = mu.positions, mu.amplitudes
    changed = True
    while changed and amp.size > 1:
        changed = False
        order = np.lexsort(pos.T[::-1])
        pos, amp = pos[order], amp[order]
        used = np.zeros(amp.size, dtype=bool)
        new_pos, new_amp = [], []
        for i in range(amp.size):
            if used[i]:
                continue
            group = ~used & (np.linalg.norm(pos - pos[i], axis=1) <= radius)
            used |= group
            if group.sum() > 1:
                changed = True
            a = amp[group]
            p = pos[group]
            w = np.abs(a)
            if w.sum() > 0:
                centre = (w[:, None] * p).sum(axis=0) / w.sum()
            else:
                centre = p.mean(axis=0)
            new_pos.append(centre)
            new_amp.append(a.sum())
        pos = np.array(new_pos)
        amp = np.array(new_amp)
    keep = np.abs(amp) > prune
    return DiscreteMeasure(pos[keep] if amp.size else pos, amp[keep] if amp.size else amp)
