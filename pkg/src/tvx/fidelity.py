"""Smooth convex data-fitting terms.

Only the quadratic fidelity f(z) = (L/2) ||z - y||_2^2 is shipped; anything
with (value, gradient, conjugate, lipschitz, strong_convexity) duck-types as
a fidelity.  For the quadratic, the gradient-Lipschitz constant and the
strong-convexity constant coincide with the weight L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadraticFidelity"]


@dataclass(frozen=True)
class QuadraticFidelity:
    y: np.ndarray
    L: float = 1.0

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.ndim != 1:
            raise ValueError("data vector y must be 1-d")
        if not self.L > 0:
            raise ValueError("weight L must be > 0")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "L", float(self.L))

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def lipschitz(self) -> float:
        return self.L

    @property
    def strong_convexity(self) -> float:
        return self.L

    def value(self, z: np.ndarray) -> float:
        r = np.asarray(z, dtype=float) - self.y
        return 0.5 * self.L * float(r @ r)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.L * (np.asarray(z, dtype=float) - self.y)

    def value_and_gradient(self, z: np.ndarray):
        r = np.asarray(z, dtype=float) - self.y
        return 0.5 * self.L * float(r @ r), self.L * r

    def conjugate(self, q: np.ndarray) -> float:
        """Fenchel conjugate f*(q) = <q, y> + ||q||^2 / (2 L)."""
        q = np.asarray(q, dtype=float)
        return float(q @ self.y) + float(q @ q) / (2.0 * self.L)

    def dual_candidate(self, z: np.ndarray) -> np.ndarray:
        """The primal-to-dual map q = -grad f(z)."""
        return -self.gradient(z)

    @property
    def prox_center(self) -> np.ndarray:
        """argmin of f*, the point -L y."""
        return -self.L * self.y

    def dual_radius(self) -> float:
        """Radius R bounding every dual iterate of a grid-restricted solve.

        R = sqrt(2 L (f*(0) - f*(q_bar))) + ||q_bar||_2 with q_bar the prox
        center; for the quadratic this collapses to 2 L ||y||_2.
        """
        return 2.0 * self.L * float(np.linalg.norm(self.y))

    def rho_estimate(self, q_star: np.ndarray) -> float:
        """Separation diagnostic rho = sqrt(-L <grad f*(u*), u*>).

        ``q_star`` is the certificate-convention dual; the dual-problem
        variable is u* = -q_star.  At an exact optimum the radicand equals
        L ||mu*||_M >= 0; returns nan when it comes out negative (q*
        inaccurate).
        """
        q = np.asarray(q_star, dtype=float)
        w = self.y - q / self.L  # grad f*(-q)
        r = self.L * float(w @ q)
        return float(np.sqrt(r)) if r >= 0 else float("nan")
