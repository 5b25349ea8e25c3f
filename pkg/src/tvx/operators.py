"""Measurement operators: families of smooth functions a_1..a_m on the domain.

An operator provides the design matrix A(X) = [A(x_1) .. A(x_p)], its spatial
derivatives, the forward map on discrete measures and fast evaluation of the
dual certificate A*q together with its gradient and Hessian.  Two operators
are shipped: real-valued Fourier moments on the 1-d torus and a grid of
Gaussian kernels in 2-d.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .measures import DiscreteMeasure, Domain, as_points

__all__ = [
    "MeasurementOperator",
    "Fourier1D",
    "Gaussian2D",
    "OperatorConstants",
    "operator_constants",
    "atom_response",
    "certificate_eval",
    "forward",
]


@dataclass(frozen=True)
class OperatorConstants:
    """Uniform bounds kappa = sup ||A(x)||_2 and its gradient/Hessian analogues."""

    kappa: float
    kappa_grad: float
    kappa_hess: float
    exact: bool = True

    def inflated(self, factor: float = 1.05) -> "OperatorConstants":
        """Safety-inflated copy for asserting bounds with sampled estimates."""
        if self.exact:
            return self
        return replace(
            self,
            kappa=self.kappa * factor,
            kappa_grad=self.kappa_grad * factor,
            kappa_hess=self.kappa_hess * factor,
        )


class MeasurementOperator:
    """Base class; subclasses fill in design/derivative/certificate evaluation."""

    domain: Domain
    m: int
    periodic: tuple[bool, ...]

    # -- design matrices ---------------------------------------------------

    def design(self, points) -> np.ndarray:
        """A(X) with shape (m, p)."""
        raise NotImplementedError

    def design_grad(self, points) -> np.ndarray:
        """A'(X) with shape (m, p, d)."""
        raise NotImplementedError

    def design_hess(self, points) -> np.ndarray:
        """A''(X) with shape (m, p, d, d)."""
        raise NotImplementedError

    # -- solver fast paths (overridable) ------------------------------------

    def gram(self, points) -> np.ndarray:
        """A(X)^T A(X) with shape (p, p)."""
        M = self.design(points)
        return M.T @ M

    def design_t(self, points, vec: np.ndarray) -> np.ndarray:
        """A(X)^T vec with shape (p,)."""
        return self.design(points).T @ np.asarray(vec, dtype=float)

    def forward_points(self, points, amplitudes: np.ndarray) -> np.ndarray:
        """A applied to sum_j amp_j delta_{x_j}, shape (m,)."""
        return self.design(points) @ np.asarray(amplitudes, dtype=float)

    # -- dual certificate ----------------------------------------------------

    def cert_value(self, q: np.ndarray, points) -> np.ndarray:
        return self.design(points).T @ np.asarray(q, dtype=float)

    def cert_grad(self, q: np.ndarray, points) -> np.ndarray:
        G = self.design_grad(points)
        return np.einsum("mpd,m->pd", G, np.asarray(q, dtype=float))

    def cert_hess(self, q: np.ndarray, points) -> np.ndarray:
        H = self.design_hess(points)
        return np.einsum("mpde,m->pde", H, np.asarray(q, dtype=float))

    # -- geometry ------------------------------------------------------------

    def wrap(self, points) -> np.ndarray:
        """Map points back into the domain: wrap periodic axes, clip the rest."""
        pts = as_points(points, self.domain.dim).copy()
        lo, wid = self.domain.lower, self.domain.widths
        for ax, per in enumerate(self.periodic):
            if per:
                pts[:, ax] = lo[ax] + np.mod(pts[:, ax] - lo[ax], wid[ax])
            else:
                pts[:, ax] = np.clip(pts[:, ax], lo[ax], self.domain.upper[ax])
        return pts

    def pairwise_dist(self, p, q) -> np.ndarray:
        """(nP, nQ) distances in the operator metric (wrap-aware on periodic axes)."""
        P = as_points(p, self.domain.dim)
        Q = as_points(q, self.domain.dim)
        delta = P[:, None, :] - Q[None, :, :]
        for ax, per in enumerate(self.periodic):
            if per:
                w = self.domain.widths[ax]
                delta[..., ax] -= w * np.round(delta[..., ax] / w)
        return np.linalg.norm(delta, axis=2)

    def constants(self, sampling_n: int | None = None) -> OperatorConstants:
        raise NotImplementedError


class Fourier1D(MeasurementOperator):
    """Fourier moments exp(-i 2 pi k x) on the torus (0, 1).

    Each integer frequency k contributes two real channels,
    a_{2j}(x) = cos(2 pi k_j x) and a_{2j+1}(x) = -sin(2 pi k_j x), so that
    the l2 norm of the complex moment vector is preserved.
    """

    def __init__(self, freqs, domain: Domain | None = None):
        freqs = np.atleast_1d(np.asarray(freqs, dtype=int))
        if freqs.ndim != 1 or freqs.size == 0:
            raise ValueError("freqs must be a non-empty 1-d integer array")
        self.freqs = freqs
        self.domain = domain if domain is not None else Domain([0.0], [1.0])
        if self.domain.dim != 1:
            raise ValueError("Fourier1D requires a 1-d domain")
        self.m = 2 * freqs.size
        self.periodic = (True,)
        self._constants_cache: dict = {}

    def _theta(self, points) -> np.ndarray:
        pts = self.domain.check(points)
        # (n_freq, p) phase matrix
        return 2.0 * np.pi * self.freqs[:, None] * pts[:, 0][None, :]

    def design(self, points) -> np.ndarray:
        th = self._theta(points)
        out = np.empty((self.m, th.shape[1]))
        out[0::2] = np.cos(th)
        out[1::2] = -np.sin(th)
        return out

    def design_grad(self, points) -> np.ndarray:
        th = self._theta(points)
        w = 2.0 * np.pi * self.freqs[:, None]
        out = np.empty((self.m, th.shape[1], 1))
        out[0::2, :, 0] = -w * np.sin(th)
        out[1::2, :, 0] = -w * np.cos(th)
        return out

    def design_hess(self, points) -> np.ndarray:
        th = self._theta(points)
        w2 = (2.0 * np.pi * self.freqs[:, None]) ** 2
        out = np.empty((self.m, th.shape[1], 1, 1))
        out[0::2, :, 0, 0] = -w2 * np.cos(th)
        out[1::2, :, 0, 0] = w2 * np.sin(th)
        return out

    # certificate evaluation without materializing (m, p) matrices
    def _qsplit(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.m,):
            raise ValueError(f"dual vector must have length {self.m}")
        return q[0::2], q[1::2]

    def cert_value(self, q, points) -> np.ndarray:
        qc, qs = self._qsplit(q)
        th = self._theta(points)
        return np.cos(th).T @ qc - np.sin(th).T @ qs

    def cert_grad(self, q, points) -> np.ndarray:
        qc, qs = self._qsplit(q)
        th = self._theta(points)
        w = 2.0 * np.pi * self.freqs
        val = -np.sin(th).T @ (w * qc) - np.cos(th).T @ (w * qs)
        return val[:, None]

    def cert_hess(self, q, points) -> np.ndarray:
        qc, qs = self._qsplit(q)
        th = self._theta(points)
        w2 = (2.0 * np.pi * self.freqs) ** 2
        val = -np.cos(th).T @ (w2 * qc) + np.sin(th).T @ (w2 * qs)
        return val[:, None, None]

    def constants(self, sampling_n: int | None = None) -> OperatorConstants:
        # closed forms: per frequency cos^2 + sin^2 = 1, so the sums are
        # position independent
        k2 = np.sum(self.freqs.astype(float) ** 2)
        k4 = np.sum(self.freqs.astype(float) ** 4)
        return OperatorConstants(
            kappa=float(np.sqrt(self.freqs.size)),
            kappa_grad=float(2.0 * np.pi * np.sqrt(k2)),
            kappa_hess=float((2.0 * np.pi) ** 2 * np.sqrt(k4)),
            exact=True,
        )


class Gaussian2D(MeasurementOperator):
    """Gaussian kernels exp(-||x - c_i||^2 / (2 sigma^2)) on a tensor grid of centers.

    The tensor structure (centers = grid_x x grid_y) is exploited everywhere:
    A(x) factors as an outer product of two axis profiles, which makes Gram
    matrices, forward maps and certificate evaluation cheap without ever
    building (m, p) design matrices.
    """

    def __init__(self, grid_n: int = 64, grid_box=((-0.5, 0.5), (-0.5, 0.5)),
                 sigma: float = 0.05, domain: Domain | None = None):
        if grid_n < 1:
            raise ValueError("grid_n must be >= 1")
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        self.grid_n = int(grid_n)
        self.grid_box = tuple((float(a), float(b)) for a, b in grid_box)
        self.sigma = float(sigma)
        self.domain = domain if domain is not None else Domain([-1.0, -1.0], [1.0, 1.0])
        if self.domain.dim != 2:
            raise ValueError("Gaussian2D requires a 2-d domain")
        self.gx = np.linspace(self.grid_box[0][0], self.grid_box[0][1], self.grid_n) \
            if self.grid_n > 1 else np.array([0.5 * sum(self.grid_box[0])])
        self.gy = np.linspace(self.grid_box[1][0], self.grid_box[1][1], self.grid_n) \
            if self.grid_n > 1 else np.array([0.5 * sum(self.grid_box[1])])
        # channel i = a * grid_n + b  <->  center (gx[a], gy[b])
        self.m = self.gx.size * self.gy.size
        self.periodic = (False, False)
        self._constants_cache: dict = {}

    # axis profiles u_a(x) = exp(-(x - g_a)^2 / (2 sigma^2)) and derivatives
    def _profiles(self, coords: np.ndarray, grid: np.ndarray, order: int):
        t = (coords[:, None] - grid[None, :]) / self.sigma  # (n, g)
        u = np.exp(-0.5 * t * t)
        if order == 0:
            return (u,)
        u1 = -(t / self.sigma) * u
        if order == 1:
            return u, u1
        u2 = ((t * t - 1.0) / self.sigma**2) * u
        return u, u1, u2

    def _uv(self, points, order: int = 0):
        pts = self.domain.check(points)
        pu = self._profiles(pts[:, 0], self.gx, order)
        pv = self._profiles(pts[:, 1], self.gy, order)
        return pu, pv

    def design(self, points) -> np.ndarray:
        (u,), (v,) = self._uv(points)
        p = u.shape[0]
        return (u[:, :, None] * v[:, None, :]).reshape(p, self.m).T

    def design_grad(self, points) -> np.ndarray:
        (u, u1), (v, v1) = self._uv(points, order=1)
        p = u.shape[0]
        out = np.empty((self.m, p, 2))
        out[:, :, 0] = (u1[:, :, None] * v[:, None, :]).reshape(p, self.m).T
        out[:, :, 1] = (u[:, :, None] * v1[:, None, :]).reshape(p, self.m).T
        return out

    def design_hess(self, points) -> np.ndarray:
        (u, u1, u2), (v, v1, v2) = self._uv(points, order=2)
        p = u.shape[0]
        out = np.empty((self.m, p, 2, 2))
        out[:, :, 0, 0] = (u2[:, :, None] * v[:, None, :]).reshape(p, self.m).T
        out[:, :, 0, 1] = (u1[:, :, None] * v1[:, None, :]).reshape(p, self.m).T
        out[:, :, 1, 0] = out[:, :, 0, 1]
        out[:, :, 1, 1] = (u[:, :, None] * v2[:, None, :]).reshape(p, self.m).T
        return out

    def gram(self, points) -> np.ndarray:
        (u,), (v,) = self._uv(points)
        return (u @ u.T) * (v @ v.T)

    def design_t(self, points, vec) -> np.ndarray:
        (u,), (v,) = self._uv(points)
        Q = np.asarray(vec, dtype=float).reshape(self.gx.size, self.gy.size)
        return ((u @ Q) * v).sum(axis=1)

    def forward_points(self, points, amplitudes) -> np.ndarray:
        (u,), (v,) = self._uv(points)
        a = np.asarray(amplitudes, dtype=float)
        return ((u * a[:, None]).T @ v).ravel()

    def cert_value(self, q, points) -> np.ndarray:
        return self.design_t(points, q)

    def cert_grad(self, q, points) -> np.ndarray:
        (u, u1), (v, v1) = self._uv(points, order=1)
        Q = np.asarray(q, dtype=float).reshape(self.gx.size, self.gy.size)
        out = np.empty((u.shape[0], 2))
        out[:, 0] = ((u1 @ Q) * v).sum(axis=1)
        out[:, 1] = ((u @ Q) * v1).sum(axis=1)
        return out

    def cert_hess(self, q, points) -> np.ndarray:
        (u, u1, u2), (v, v1, v2) = self._uv(points, order=2)
        Q = np.asarray(q, dtype=float).reshape(self.gx.size, self.gy.size)
        out = np.empty((u.shape[0], 2, 2))
        out[:, 0, 0] = ((u2 @ Q) * v).sum(axis=1)
        out[:, 0, 1] = ((u1 @ Q) * v1).sum(axis=1)
        out[:, 1, 0] = out[:, 0, 1]
        out[:, 1, 1] = ((u @ Q) * v2).sum(axis=1)
        return out

    def constants(self, sampling_n: int | None = None) -> OperatorConstants:
        n = 64 if sampling_n is None else int(sampling_n)
        if n < 2:
            raise ValueError("sampling_n must be >= 2 per axis")
        if n in self._constants_cache:
            return self._constants_cache[n]
        sx = np.linspace(self.domain.lower[0], self.domain.upper[0], n)
        sy = np.linspace(self.domain.lower[1], self.domain.upper[1], n)
        u, u1, u2 = self._profiles(sx, self.gx, order=2)
        v, v1, v2 = self._profiles(sy, self.gy, order=2)

        # per-axis dot tables; everything below is an outer product over (sx, sy)
        def dots(a, b):
            return (a * b).sum(axis=1)

        nu0, nu1, nu2 = dots(u, u), dots(u1, u1), dots(u2, u2)
        nv0, nv1, nv2 = dots(v, v), dots(v1, v1), dots(v2, v2)
        cu01, cu02, cu12 = dots(u, u1), dots(u, u2), dots(u1, u2)
        cv01, cv02, cv12 = dots(v, v1), dots(v, v2), dots(v1, v2)

        kappa = float(np.sqrt(nu0.max() * nv0.max()))

        # spectral norm of the (m, 2) Jacobian from its 2x2 Gram
        g11 = np.multiply.outer(nu1, nv0)
        g22 = np.multiply.outer(nu0, nv1)
        g12 = np.multiply.outer(cu01, cv01)
        tr = g11 + g22
        disc = np.sqrt(np.maximum((g11 - g22) ** 2 + 4.0 * g12**2, 0.0))
        kappa_grad = float(np.sqrt(np.maximum(tr + disc, 0.0).max() / 2.0))

        # sup over unit q and unit v of |v^T (sum_i q_i a_i''(x)) v|: for each x
        # maximize || c1 h11 + c2 h12 + c3 h22 ||_2 over the angle fan,
        # c = (cos^2, 2 cos sin, sin^2), using the 3x3 Gram of (h11, h12, h22)
        G = np.empty((3, 3) + g11.shape)
        G[0, 0] = np.multiply.outer(nu2, nv0)
        G[0, 1] = G[1, 0] = np.multiply.outer(cu12, cv01)
        G[0, 2] = G[2, 0] = np.multiply.outer(cu02, cv02)
        G[1, 1] = np.multiply.outer(nu1, nv1)
        G[1, 2] = G[2, 1] = np.multiply.outer(cu01, cv12)
        G[2, 2] = np.multiply.outer(nu0, nv2)
        theta = np.linspace(0.0, np.pi, 181)
        c = np.stack([np.cos(theta) ** 2, 2.0 * np.sin(theta) * np.cos(theta),
                      np.sin(theta) ** 2])  # (3, n_theta)
        quad = np.einsum("at,abxy,bt->txy", c, G, c)
        kappa_hess = float(np.sqrt(np.maximum(quad, 0.0).max()))

        out = OperatorConstants(kappa, kappa_grad, kappa_hess, exact=False)
        self._constants_cache[n] = out
        return out


def operator_constants(op: MeasurementOperator, sampling_n: int | None = None) -> OperatorConstants:
    """Regularity constants of the operator (closed form or sampled estimate)."""
    return op.constants(sampling_n)


def atom_response(op: MeasurementOperator, x, order: int = 0):
    """A(x) and optionally A'(x), A''(x) at a single point.

    Returns a tuple of length order + 1: (A(x),), (A(x), A'(x)) or
    (A(x), A'(x), A''(x)) with shapes (m,), (m, d) and (m, d, d).
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    pts = op.domain.check(x)
    out = [op.design(pts)[:, 0]]
    if order >= 1:
        out.append(op.design_grad(pts)[:, 0, :])
    if order == 2:
        out.append(op.design_hess(pts)[:, 0, :, :])
    return tuple(out)


def certificate_eval(op: MeasurementOperator, q, x, order: int = 2):
    """Dual certificate A*q at a single point: (value, gradient, hessian).

    Entries beyond ``order`` are None.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    pts = op.domain.check(x)
    value = float(op.cert_value(q, pts)[0])
    grad = op.cert_grad(q, pts)[0] if order >= 1 else None
    hess = op.cert_hess(q, pts)[0] if order == 2 else None
    return value, grad, hess


def forward(op: MeasurementOperator, mu: DiscreteMeasure) -> np.ndarray:
    """A mu = sum_i amp_i A(x_i)."""
    if mu.n_atoms == 0:
        return np.zeros(op.m)
    op.domain.check(mu.positions)
    return op.forward_points(mu.positions, mu.amplitudes)
