"""Executable checks of the convergence theory for linear forward maps.

Each function here is an oracle that is independent of the filter code:
fixed points come from iterating the covariance recursion in precision
form and minimizers from closed-form normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engines import linear_kalman_update
from .errors import NoConvergence, SingularNormalEquations
from .gaussian import GaussianState, symmetrize


@dataclass(frozen=True)
class LinearProblemSpec:
    G: np.ndarray
    y: np.ndarray
    sigma_nu: np.ndarray
    sigma_omega: np.ndarray
    alpha: float
    r0: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        n_y, n_theta = G.shape
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        object.__setattr__(self, "r0", np.broadcast_to(np.asarray(self.r0, dtype=float), (n_theta,)).copy())
        for name, size in (("sigma_nu", n_y), ("sigma_omega", n_theta)):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape != (size, size):
                raise ValueError(f"{name} must be {size}x{size}, got {M.shape}")
            object.__setattr__(self, name, M)
        if self.y.size != n_y:
            raise ValueError("y and G are inconsistent")

    @property
    def n_theta(self) -> int:
        return self.G.shape[1]

    @classmethod
    def from_problem(cls, problem, hp) -> "LinearProblemSpec":
        return cls(problem.matrix, problem.y_obs, hp.sigma_nu, hp.sigma_omega, hp.alpha, hp.r0)

    def precision_data(self) -> np.ndarray:
        """``G^T sigma_nu^{-1} G``."""
        return self.G.T @ np.linalg.solve(self.sigma_nu, self.G)


@dataclass(frozen=True)
class SteadyState:
    c_inf: np.ndarray
    c_hat_inf: np.ndarray
    m_inf: np.ndarray
    iterations_to_converge: int


def solve_steady_covariance(
    spec: LinearProblemSpec,
    gamma: float = 1.0,
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> SteadyState:
    """Fixed point of ``C^{-1} = G^T sigma_nu^{-1} G + (alpha^2 C + sigma_omega)^{-1}``.

    Iterates the recursion from ``C = gamma I`` until the Frobenius change
    falls below ``tol * max(1, |C|_F)``.
    """
    A = spec.precision_data()
    n = spec.n_theta
    C = gamma * np.eye(n)
    a2 = spec.alpha**2
    for it in range(1, max_iter + 1):
        C_hat = symmetrize(a2 * C + spec.sigma_omega)
        C_new = symmetrize(np.linalg.inv(A + np.linalg.inv(C_hat)))
        delta = np.linalg.norm(C_new - C)
        C = C_new
        if not np.all(np.isfinite(C)):
            break
        if delta < tol * max(1.0, np.linalg.norm(C)):
            c_hat = symmetrize(a2 * C + spec.sigma_omega)
            return SteadyState(C, c_hat, minimize_phi_r(spec, c_hat), it)
    raise NoConvergence(
        f"covariance recursion did not settle after {max_iter} iterations "
        "(alpha = 1 needs G^T of full column rank)"
    )


def steady_state_residual(spec: LinearProblemSpec, C: np.ndarray) -> float:
    """Frobenius residual of the steady-state equation in precision form."""
    C_hat = spec.alpha**2 * C + spec.sigma_omega
    return float(
        np.linalg.norm(np.linalg.inv(C) - spec.precision_data() - np.linalg.inv(C_hat))
    )


def _normal_equations(spec: LinearProblemSpec, c_hat_inf: np.ndarray):
    P = (1.0 - spec.alpha) * np.linalg.inv(c_hat_inf)
    H = spec.precision_data() + P
    b = spec.G.T @ np.linalg.solve(spec.sigma_nu, spec.y) + P @ spec.r0
    return H, b


def minimize_phi_r(spec: LinearProblemSpec, c_hat_inf: np.ndarray) -> np.ndarray:
    """Minimizer of the regularized least-squares functional.

    ``phi_r = 0.5 |sigma_nu^{-1/2}(y - G t)|^2 + 0.5 (1 - alpha) |C_hat^{-1/2}(t - r0)|^2``
    """
    H, b = _normal_equations(spec, c_hat_inf)
    if np.linalg.cond(H) > 1e14:
        raise SingularNormalEquations(f"normal matrix is singular (cond {np.linalg.cond(H):.2e})")
    return np.linalg.solve(H, b)


def phi_r(spec: LinearProblemSpec, c_hat_inf: np.ndarray, theta: np.ndarray) -> float:
    r = spec.y - spec.G @ theta
    d = theta - spec.r0
    return 0.5 * float(r @ np.linalg.solve(spec.sigma_nu, r)) + 0.5 * (1.0 - spec.alpha) * float(
        d @ np.linalg.solve(c_hat_inf, d)
    )


def fd_gradient(f, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h * (1.0 + abs(theta[i]))
        g[i] = (f(theta + e) - f(theta - e)) / (2 * e[i])
    return g


def kalman_iterates(spec: LinearProblemSpec, init: GaussianState, n: int) -> list[GaussianState]:
    """``[state_0, ..., state_n]`` of the exact linear filter."""
    states = [init]
    for _ in range(n):
        states.append(
            linear_kalman_update(
                states[-1], spec.G, spec.y, spec.alpha, spec.r0, spec.sigma_omega, spec.sigma_nu
            )
        )
    return states


def decay_rate(errors: np.ndarray, start: int = 5) -> float:
    """Least-squares slope of ``log(error)`` against iteration, from ``start`` on."""
    errors = np.asarray(errors, dtype=float)
    n = np.arange(errors.size)
    keep = (n >= start) & (errors > 0) & np.isfinite(errors)
    if keep.sum() < 2:
        raise ValueError("not enough positive errors to fit a rate")
    return float(np.polyfit(n[keep], np.log(errors[keep]), 1)[0])


def remark1_spec(G, sigma_eta, y, alpha, r0=None) -> tuple[LinearProblemSpec, np.ndarray]:
    """Spec with ``sigma_nu = 2 sigma_eta`` and ``sigma_omega = (2 - alpha^2) C_*``.

    ``C_* = (G^T sigma_eta^{-1} G)^{-1}``; returns the spec and ``C_*``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    c_star = np.linalg.inv(G.T @ np.linalg.solve(sigma_eta, G))
    r0 = np.zeros(G.shape[1]) if r0 is None else r0
    spec = LinearProblemSpec(G, y, 2.0 * sigma_eta, (2.0 - alpha**2) * c_star, alpha, r0)
    return spec, c_star


# --- alpha = 1 regimes ---------------------------------------------------------


def pinv_eig(S: np.ndarray, rel_cut: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric matrix via eigendecomposition."""
    w, V = np.linalg.eigh(symmetrize(S))
    keep = np.abs(w) > rel_cut * np.abs(w).max()
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def _sqrtm_spd(C):
    w, V = np.linalg.eigh(symmetrize(C))
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


@dataclass
class AlgebraicLawReport:
    cov_residual: np.ndarray  # |C_n' (I + nS) - I|_F
    mean_residual: np.ndarray  # |(I + nS) m_n' - m_0' - n G'^T sigma_nu^{-1} y| / (1 + |rhs|)
    observed_limit_error: np.ndarray  # |n^{-1} P (C_n')^{-1} - S|_F, n >= 1
    unobserved_drift: np.ndarray  # |Q m_n' - Q m_0'|
    S: np.ndarray
    S_pinv: np.ndarray

    @property
    def max_cov_residual(self) -> float:
        return float(self.cov_residual.max())

    @property
    def max_mean_residual(self) -> float:
        return float(self.mean_residual.max())


def algebraic_law_check(G, sigma_nu, C0, m0, y, n_max: int) -> AlgebraicLawReport:
    """Check the exact algebraic law of the filter with ``alpha = 1``, ``sigma_omega = 0``.

    In whitened variables ``C' = C0^{-1/2} C C0^{-1/2}``, ``m' = C0^{-1/2} m``,
    ``G' = G C0^{1/2}`` and ``S = G'^T sigma_nu^{-1} G'``, the filter satisfies
    ``(C_n')^{-1} = I + nS`` and ``(I + nS) m_n' = m_0' + n G'^T sigma_nu^{-1} y``.
    The covariance identity is tested in product form to avoid inverting
    the collapsing covariance.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n_theta = G.shape[1]
    C0_half, C0_mhalf = _sqrtm_spd(np.asarray(C0, dtype=float))
    Gp = G @ C0_half
    S = Gp.T @ np.linalg.solve(sigma_nu, Gp)
    b = Gp.T @ np.linalg.solve(sigma_nu, y)
    S_pinv = pinv_eig(S)
    P = S_pinv @ S
    Q = np.eye(n_theta) - P
    eye = np.eye(n_theta)
    zero = np.zeros((n_theta, n_theta))

    state = GaussianState(m0, C0)
    m0p = C0_mhalf @ state.mean
    cov_res, mean_res, lim_err, drift = [], [], [], []
    for n in range(n_max + 1):
        if n > 0:
            state = linear_kalman_update(state, G, y, 1.0, np.zeros(n_theta), zero, sigma_nu)
        Cp = C0_mhalf @ state.cov @ C0_mhalf
        mp = C0_mhalf @ state.mean
        M = eye + n * S
        rhs = m0p + n * b
        cov_res.append(np.linalg.norm(Cp @ M - eye))
        mean_res.append(np.linalg.norm(M @ mp - rhs) / (1.0 + np.linalg.norm(rhs)))
        if n > 0:
            lim_err.append(np.linalg.norm(P @ np.linalg.inv(Cp) / n - S))
        drift.append(np.linalg.norm(Q @ (mp - m0p)))
    return AlgebraicLawReport(
        np.array(cov_res), np.array(mean_res), np.array(lim_err), np.array(drift), S, S_pinv
    )


@dataclass
class DivergenceReport:
    margins: np.ndarray  # min eigenvalue of C0 + n sigma_omega - C_n
    eigen_range: np.ndarray  # max eigenvalue of C0 + n sigma_omega
    cov_norms: np.ndarray  # |C_n|_F
    mean_steps: np.ndarray  # |m_n - m_{n-1}|, n >= 1
    means: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(self.margins.min())


def divergence_bound_check(spec: LinearProblemSpec, n_max: int, C0=None, m0=None) -> DivergenceReport:
    """Track ``C_n`` against ``C0 + n sigma_omega`` for ``alpha = 1``.

    With a rank-deficient ``G`` the covariance grows without bound while the
    mean still converges; the bound must hold at every step.
    """
    if spec.alpha != 1.0:
        raise ValueError("the divergence bound applies to alpha = 1")
    n_theta = spec.n_theta
    C0 = np.eye(n_theta) if C0 is None else np.asarray(C0, dtype=float)
    m0 = spec.r0 if m0 is None else np.asarray(m0, dtype=float)
    states = kalman_iterates(spec, GaussianState(m0, C0), n_max)
    margins, ranges, norms = [], [], []
    for n, s in enumerate(states):
        bound = C0 + n * spec.sigma_omega
        margins.append(np.linalg.eigvalsh(symmetrize(bound - s.cov))[0])
        ranges.append(np.linalg.eigvalsh(symmetrize(bound))[-1])
        norms.append(np.linalg.norm(s.cov))
    means = np.array([s.mean for s in states])
    steps = np.linalg.norm(np.diff(means, axis=0), axis=1)
    return DivergenceReport(np.array(margins), np.array(ranges), np.array(norms), steps, means)
