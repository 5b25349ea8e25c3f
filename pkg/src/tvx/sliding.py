"""Continuous refinement: gradient descent on the finite parameterization
G(a, X) = ||a||_1 + f(A(sum_i a_i delta_{x_i})).

G is smooth as long as no amplitude vanishes; its exact gradient is
(sgn(a) - (A*q)(X), -D(a) (A*q)'(X)) with q = -grad f(A mu).  Descent uses a
strong-Wolfe line search; steps that would cross an amplitude through zero or
push a position out of the domain are truncated and logged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fidelity import QuadraticFidelity
from .measures import DiscreteMeasure, as_points, tv_norm
from .operators import MeasurementOperator, forward

__all__ = [
    "Parameterization",
    "SlideConfig",
    "SlideResult",
    "TransitionReport",
    "NondifferentiableError",
    "objective_G",
    "gradient_G",
    "run_sliding",
    "transition_gram",
    "amplitude_error_bound",
]


class NondifferentiableError(ValueError):
    """G has no gradient where an amplitude vanishes."""


@dataclass(frozen=True)
class Parameterization:
    """Amplitude/position coordinates of a discrete measure."""

    amplitudes: np.ndarray  # (p,)
    positions: np.ndarray   # (p, d)

    def __post_init__(self):
        amp = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        pos = as_points(self.positions)
        if amp.size != pos.shape[0]:
            raise ValueError("one amplitude per position required")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "positions", pos)

    @property
    def p(self) -> int:
        return self.amplitudes.size

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def flat(self) -> np.ndarray:
        """[amplitudes, positions.ravel()] in the transition-matrix ordering."""
        return np.concatenate([self.amplitudes, self.positions.ravel()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, p: int, dim: int) -> "Parameterization":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:p], vec[p:].reshape(p, dim))

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> "Parameterization":
        return cls(mu.amplitudes.copy(), mu.positions.copy())

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions, self.amplitudes)


@dataclass(frozen=True)
class SlideConfig:
    c1: float = 1e-4
    c2: float = 0.9
    grad_tol: float = 1e-10
    max_iter: int = 2000
    ls_max: int = 60
    eps_amp: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.c1 < 0.5):
            raise ValueError("need 0 < c1 < 0.5")
        if not (self.c1 < self.c2 < 1.0):
            raise ValueError("need c1 < c2 < 1")


@dataclass
class SlideResult:
    params: Parameterization
    g_history: list            # rows (iteration, G, grad_norm, step)
    status: str                 # converged | max_iter | ls_failed | stuck
    iterations: int
    events: list = field(default_factory=list)
    wolfe_log: list = field(default_factory=list)

    @property
    def final_value(self) -> float:
        return self.g_history[-1][1] if self.g_history else float("nan")


def objective_G(amplitudes, positions, op: MeasurementOperator,
                fid: QuadraticFidelity) -> float:
    """||a||_1 + f(A mu); atoms are kept separate (no merging)."""
    amp = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    pos = op.domain.check(positions)
    z = op.forward_points(pos, amp) if amp.size else np.zeros(op.m)
    return float(np.abs(amp).sum()) + fid.value(z)


def gradient_G(amplitudes, positions, op: MeasurementOperator,
               fid: QuadraticFidelity, eps_amp: float = 0.0):
    """Exact gradient of G: (sgn(a) - (A*q)(X), -D(a) (A*q)'(X))."""
    amp = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    pos = op.domain.check(positions)
    if np.any(np.abs(amp) <= eps_amp):
        raise NondifferentiableError(
            "gradient of G undefined: an amplitude is (numerically) zero")
    z = op.forward_points(pos, amp)
    q = fid.dual_candidate(z)
    grad_a = np.sign(amp) - op.cert_value(q, pos)
    grad_x = -amp[:, None] * op.cert_grad(q, pos)
    return grad_a, grad_x


def _eval(vec, p, d, op, fid, eps_amp):
    params = Parameterization.from_flat(vec, p, d)
    g = objective_G(params.amplitudes, params.positions, op, fid)
    ga, gx = gradient_G(params.amplitudes, params.positions, op, fid, eps_amp=0.0)
    return g, np.concatenate([ga, gx.ravel()])


def _step_cap(vec, direction, p, d, op, eps_amp):
    """Largest step keeping every |a_i| >= eps_amp and positions in the box."""
    cap = np.inf
    events = []
    amp, da = vec[:p], direction[:p]
    for i in range(p):
        if da[i] != 0 and np.sign(da[i]) == -np.sign(amp[i]):
            t = (abs(amp[i]) - eps_amp) / abs(da[i])
            if t < cap:
                cap, events = t, [("amplitude_truncated", i)]
            elif t == cap:
                events.append(("amplitude_truncated", i))
    pos = vec[p:].reshape(p, d)
    dx = direction[p:].reshape(p, d)
    lo, hi = op.domain.lower, op.domain.upper
    for i in range(p):
        for ax in range(d):
            if dx[i, ax] > 0:
                t = (hi[ax] - pos[i, ax]) / dx[i, ax]
            elif dx[i, ax] < 0:
                t = (lo[ax] - pos[i, ax]) / dx[i, ax]
            else:
                continue
            if t < cap:
                cap, events = t, [("position_clipped", i)]
    return cap, events


def run_sliding(start: Parameterization, op: MeasurementOperator,
                fid: QuadraticFidelity, cfg: SlideConfig | None = None) -> SlideResult:
    """Gradient descent on G with a strong-Wolfe line search.

    Terminates when ||grad G||_2 <= grad_tol or after max_iter steps; a step
    that would flip an amplitude sign or leave the domain is truncated to the
    feasible segment and logged.
    """
    cfg = cfg or SlideConfig()
    p, d = start.p, start.dim
    if np.any(np.abs(start.amplitudes) <= cfg.eps_amp):
        raise NondifferentiableError("start has an amplitude below eps_amp")
    vec = start.flat()
    g_val, grad = _eval(vec, p, d, op, fid, cfg.eps_amp)
    history = []
    events: list = []
    wolfe_log: list = []
    status = "max_iter"
    t_prev = 1.0
    it = 0
    while True:
        gnorm = float(np.linalg.norm(grad))
        history.append((it, g_val, gnorm, t_prev if it else 0.0))
        if gnorm <= cfg.grad_tol:
            status = "converged"
            break
        if it >= cfg.max_iter:
            status = "max_iter"
            break
        direction = -grad
        slope0 = -gnorm * gnorm
        t_max, cap_events = _step_cap(vec, direction, p, d, op, cfg.eps_amp)
        if t_max <= 1e-18:
            status = "stuck"
            break
        accept = _wolfe_search(
            lambda t: _eval(vec + t * direction, p, d, op, fid, cfg.eps_amp),
            g_val, slope0, direction, cfg, min(2.0 * t_prev, 1.0e6), t_max)
        if accept is None:
            status = "ls_failed"
            break
        t, g_new, grad_new, truncated, wolfe_ok, slope_t = accept
        wolfe_log.append((t, g_val, g_new, slope0, slope_t, truncated, wolfe_ok))
        if truncated:
            events.extend((it,) + e for e in cap_events)
        vec = vec + t * direction
        g_val, grad = g_new, grad_new
        t_prev = t
        it += 1
    return SlideResult(
        params=Parameterization.from_flat(vec, p, d),
        g_history=history,
        status=status,
        iterations=it,
        events=events,
        wolfe_log=wolfe_log,
    )


def _wolfe_search(phi, f0, slope0, direction, cfg: SlideConfig,
                  t_init: float, t_max: float):
    """Strong-Wolfe bracketing + zoom (capped at t_max).

    Returns (t, f_t, grad_t, truncated, wolfe_ok, slope_t) or None.  When the
    admissible segment ends while the slope is still negative, the endpoint is
    accepted with truncated=True provided it satisfies sufficient decrease.
    """
    c1, c2 = cfg.c1, cfg.c2

    def probe(t):
        f_t, grad_t = phi(t)
        return f_t, grad_t, float(grad_t @ direction)

    t = min(t_init, t_max)
    t_lo, f_lo, s_lo = 0.0, f0, slope0
    bracket = None
    f_prev, t_prev = f0, 0.0
    for _ in range(cfg.ls_max):
        f_t, grad_t, s_t = probe(t)
        if f_t > f0 + c1 * t * slope0 or (t_prev > 0 and f_t >= f_prev):
            bracket = (t_prev, t)
            break
        if abs(s_t) <= -c2 * slope0:
            return t, f_t, grad_t, False, True, s_t
        if s_t >= 0:
            bracket = (t, t_prev)
            break
        if t >= t_max * (1.0 - 1e-12):
            # admissible segment exhausted with Armijo still holding
            return t, f_t, grad_t, True, False, s_t
        t_prev, f_prev = t, f_t
        t = min(2.0 * t, t_max)
    if bracket is None:
        return None

    lo, hi = bracket
    f_lo = probe(lo)[0] if lo > 0 else f0
    best = None
    for _ in range(cfg.ls_max):
        t = 0.5 * (lo + hi)
        f_t, grad_t, s_t = probe(t)
        if f_t > f0 + c1 * t * slope0 or f_t >= f_lo:
            hi = t
        else:
            best = (t, f_t, grad_t, s_t)
            if abs(s_t) <= -c2 * slope0:
                return t, f_t, grad_t, False, True, s_t
            if s_t * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = t, f_t
        if abs(hi - lo) <= 1e-18:
            break
    if best is not None:
        t, f_t, grad_t, s_t = best
        return t, f_t, grad_t, False, False, s_t
    return None


# --------------------------------------------------------------------------
# transition matrix and amplitude bound


@dataclass
class TransitionReport:
    matrix: np.ndarray  # (s + s d, s + s d) Gram matrix
    gamma: float        # smallest eigenvalue


def transition_gram(op: MeasurementOperator, xi) -> TransitionReport:
    """Gram matrix of [A(xi_1)..A(xi_s) | columns of A'(xi_i)] and its smallest
    eigenvalue; positive definiteness of this matrix controls the descent basin."""
    pts = op.domain.check(xi)
    s = pts.shape[0]
    if s == 0:
        raise ValueError("xi must be non-empty")
    if np.unique(pts, axis=0).shape[0] != s:
        raise ValueError("transition matrix requires pairwise distinct points")
    M = op.design(pts)
    Mg = op.design_grad(pts).reshape(op.m, s * pts.shape[1])
    M2 = np.concatenate([M, Mg], axis=1)
    T = M2.T @ M2
    T = 0.5 * (T + T.T)
    gamma = float(np.linalg.eigvalsh(T).min())
    return TransitionReport(matrix=T, gamma=gamma)


def _match_atoms(mu_tilde: DiscreteMeasure, mu_star: DiscreteMeasure):
    """Greedy nearest-position matching; errors on ambiguous matchings."""
    if mu_tilde.n_atoms != mu_star.n_atoms:
        raise ValueError("atom counts differ; amplitude bound needs matched atoms")
    s = mu_star.n_atoms
    D = np.linalg.norm(
        mu_tilde.positions[:, None, :] - mu_star.positions[None, :, :], axis=2)
    if s > 1:
        sep = np.linalg.norm(
            mu_star.positions[:, None, :] - mu_star.positions[None, :, :], axis=2)
        min_sep = sep[~np.eye(s, dtype=bool)].min()
    else:
        min_sep = np.inf
    D = D.copy()
    pairs = []
    for _ in range(s):
        i, j = np.unravel_index(np.argmin(D), D.shape)
        if D[i, j] > 0.5 * min_sep:
            raise ValueError(
                f"match distance {D[i, j]:.3g} exceeds half the minimal spike separation")
        pairs.append((i, j, D[i, j]))
        D[i, :] = np.inf
        D[:, j] = np.inf
    return pairs


def amplitude_error_bound(mu_tilde: DiscreteMeasure, mu_star: DiscreteMeasure,
                          op: MeasurementOperator, fid: QuadraticFidelity,
                          gamma: float | None = None,
                          kappa_grad: float | None = None,
                          j_star: float | None = None):
    """Both sides of the amplitude stability inequality.

    lhs = ||a_tilde - a*||_2 after nearest-position matching;
    rhs = (kappa_grad ||mu_tilde||_M sup_l ||xi_l - x_l|| +
           sqrt(2/Lambda (J(mu_tilde) - J(mu*)))) / sqrt(Gamma).
    """
    pairs = _match_atoms(mu_tilde, mu_star)
    idx_t = [p[0] for p in pairs]
    idx_s = [p[1] for p in pairs]
    lhs = float(np.linalg.norm(
        mu_tilde.amplitudes[idx_t] - mu_star.amplitudes[idx_s]))
    sup_dist = max(p[2] for p in pairs)

    if gamma is None:
        gamma = transition_gram(op, mu_star.positions).gamma
    if gamma <= 0:
        raise ValueError("transition matrix not positive definite; bound void")
    if kappa_grad is None:
        kappa_grad = op.constants().inflated().kappa_grad

    def J(mu):
        return tv_norm(mu) + fid.value(forward(op, mu))

    j_tilde = J(mu_tilde)
    if j_star is None:
        j_star = J(mu_star)
    excess = max(j_tilde - j_star, 0.0)
    rhs = (kappa_grad * tv_norm(mu_tilde) * sup_dist
           + np.sqrt(2.0 / fid.strong_convexity * excess)) / np.sqrt(gamma)
    return lhs, float(rhs)
