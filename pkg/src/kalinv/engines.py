"""Iterated Kalman inversion: UKI, ExKI, EKI and the exact linear Kalman filter.

Every method iterates the same prediction step of the artificial dynamics

    theta_{n+1} = alpha theta_n + (1 - alpha) r0 + omega,   omega ~ N(0, sigma_omega)
    y           = G(theta_{n+1}) + nu,                      nu    ~ N(0, sigma_nu)

with the data ``y`` held fixed, and differs only in how the joint moments of
``(theta, G(theta))`` are approximated in the analysis step.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve

from .errors import (
    DimensionMismatch,
    ForwardModelFailure,
    JacobianUnavailable,
    KalinvError,
    NonFiniteForwardValue,
)
from .gaussian import (
    GaussianState,
    JointGaussian,
    cholesky_psd,
    default_spread,
    gaussian_condition,
    sigma_points,
    symmetrize,
    unscented_joint,
)
from .problems.base import InverseProblem

log = logging.getLogger(__name__)

METHODS = ("uki", "exki", "eki", "kf")


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    r0: np.ndarray
    gamma: float
    sigma_omega: np.ndarray
    sigma_nu: np.ndarray
    spread_a: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0,1]")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if self.spread_a is not None and not self.spread_a > 0.0:
            raise ValueError("spread_a must be positive")
        object.__setattr__(self, "r0", np.atleast_1d(np.asarray(self.r0, dtype=float)))
        for name in ("sigma_omega", "sigma_nu"):
            M = symmetrize(np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
            if np.linalg.eigvalsh(M)[0] <= 0.0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, M)
        if self.sigma_omega.shape[0] != self.r0.size:
            raise DimensionMismatch("sigma_omega and r0 dimensions differ")

    @classmethod
    def default(
        cls,
        sigma_eta: np.ndarray,
        n_theta: int,
        alpha: float = 1.0,
        gamma: float = 1.0,
        r0: np.ndarray | None = None,
        spread_a: float | None = None,
    ) -> "HyperParams":
        """``sigma_nu = 2 sigma_eta`` and ``sigma_omega = (2 - alpha^2) gamma I``."""
        r0 = np.zeros(n_theta) if r0 is None else r0
        return cls(
            alpha=alpha,
            r0=r0,
            gamma=gamma,
            sigma_omega=(2.0 - alpha**2) * gamma * np.eye(n_theta),
            sigma_nu=2.0 * np.atleast_2d(sigma_eta),
            spread_a=spread_a,
        )

    @classmethod
    def for_problem(cls, problem: InverseProblem, alpha=1.0, gamma=None, spread_a=None):
        gamma = problem.gamma if gamma is None else gamma
        return cls.default(problem.sigma_eta, problem.n_theta, alpha, gamma, problem.r0, spread_a)

    def spread(self, n_theta: int) -> float:
        return default_spread(n_theta) if self.spread_a is None else self.spread_a


@dataclass
class Ensemble:
    particles: np.ndarray  # shape (J, N_theta)
    rng_seed: int = 0

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if self.size < 2:
            raise ValueError("an ensemble needs at least two particles")

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    @property
    def cov(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.particles, rowvar=False, ddof=1))

    def as_gaussian(self) -> GaussianState:
        return GaussianState(self.mean, self.cov)

    @classmethod
    def sample(cls, state: GaussianState, size: int, seed: int = 0, rng=None) -> "Ensemble":
        rng = np.random.default_rng(seed) if rng is None else rng
        L = cholesky_psd(state.cov)
        z = rng.standard_normal((size, state.dim))
        return cls(state.mean + z @ L.T, rng_seed=seed)


@dataclass
class ConvergenceRecord:
    iteration: int
    mean: np.ndarray
    cov_frobenius: float
    misfit: float
    param_error: Optional[float] = None
    relative_field_error: Optional[float] = None


@dataclass
class RunResult:
    method: str
    history: list[ConvergenceRecord]
    final: Union[GaussianState, Ensemble]
    forward_evaluations: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.history]
        )

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.history])


# --- forward evaluation ----------------------------------------------------


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("KALINV_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_forward(forward: Callable, points: np.ndarray, threads: int | None = None) -> np.ndarray:
    """Evaluate ``forward`` at each row of ``points``, in index order.

    Evaluations may run on a thread pool (``KALINV_THREADS``); results are
    gathered by index so the output does not depend on scheduling.
    """
    threads = _thread_count() if threads is None else threads
    rows = list(points)
    if threads > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(forward, rows))
    else:
        outs = [forward(p) for p in rows]
    values = np.array([np.atleast_1d(np.asarray(o, dtype=float)) for o in outs])
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise ForwardModelFailure(
            f"forward map returned non-finite values at point {j}: {points[j]}", index=j
        )
    return values


def fd_jacobian(forward: Callable, theta: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian, step ``rel_step * (1 + |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for i in range(theta.size):
        h = rel_step * (1.0 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        cols.append((np.asarray(forward(theta + e)) - np.asarray(forward(theta - e))) / (2 * h))
    return np.atleast_2d(np.column_stack(cols))


# --- one step of each method ------------------------------------------------


def predict(state: GaussianState, hp: HyperParams) -> GaussianState:
    a = hp.alpha
    return GaussianState(
        a * state.mean + (1.0 - a) * hp.r0,
        a * a * state.cov + hp.sigma_omega,
    )


def uki_step(state: GaussianState, problem: InverseProblem, hp: HyperParams) -> GaussianState:
    pred = predict(state, hp)
    pts = sigma_points(pred, hp.spread(state.dim))
    g = evaluate_forward(problem.forward, pts.points)
    joint = unscented_joint(pts, g, pred.cov, hp.sigma_nu)
    return gaussian_condition(joint, problem.y_obs)


def exki_step(
    state: GaussianState,
    problem: InverseProblem,
    hp: HyperParams,
    jacobian: Callable | None = None,
) -> GaussianState:
    jacobian = jacobian or problem.jacobian
    if jacobian is None:
        raise JacobianUnavailable(
            f"problem {problem.name!r} provides no Jacobian; enable the finite-difference fallback"
        )
    pred = predict(state, hp)
    g = evaluate_forward(problem.forward, pred.mean[None, :])[0]
    dG = np.atleast_2d(np.asarray(jacobian(pred.mean), dtype=float))
    if not np.all(np.isfinite(dG)):
        raise NonFiniteForwardValue("Jacobian has non-finite entries", index=0)
    joint = JointGaussian(
        mean_theta=pred.mean,
        mean_y=g,
        cov_theta=pred.cov,
        cov_theta_y=pred.cov @ dG.T,
        cov_yy=symmetrize(dG @ pred.cov @ dG.T + hp.sigma_nu),
    )
    return gaussian_condition(joint, problem.y_obs)


def linear_kalman_update(
    state: GaussianState,
    G: np.ndarray,
    y: np.ndarray,
    alpha: float,
    r0: np.ndarray,
    sigma_omega: np.ndarray,
    sigma_nu: np.ndarray,
) -> GaussianState:
    """Exact Kalman step for a linear forward map. ``sigma_omega`` may be singular."""
    G = np.atleast_2d(G)
    m_hat = alpha * state.mean + (1.0 - alpha) * r0
    C_hat = symmetrize(alpha * alpha * state.cov + sigma_omega)
    joint = JointGaussian(
        mean_theta=m_hat,
        mean_y=G @ m_hat,
        cov_theta=C_hat,
        cov_theta_y=C_hat @ G.T,
        cov_yy=symmetrize(G @ C_hat @ G.T + sigma_nu),
    )
    return gaussian_condition(joint, y)


def kalman_step(state: GaussianState, G: np.ndarray, y: np.ndarray, hp: HyperParams) -> GaussianState:
    return linear_kalman_update(state, G, y, hp.alpha, hp.r0, hp.sigma_omega, hp.sigma_nu)


def eki_step(ens: Ensemble, problem: InverseProblem, hp: HyperParams, rng: np.random.Generator) -> Ensemble:
    """One stochastic EKI step.

    Noise is drawn in a fixed order (every omega, then every nu, by particle
    index) so that a seeded generator gives bit-identical output.
    """
    theta = ens.particles
    J, n = theta.shape
    L_omega = cholesky_psd(hp.sigma_omega)
    L_nu = cholesky_psd(hp.sigma_nu)
    omega = rng.standard_normal((J, n)) @ L_omega.T
    nu = rng.standard_normal((J, problem.n_y)) @ L_nu.T

    theta_hat = hp.alpha * theta + (1.0 - hp.alpha) * hp.r0 + omega
    y_hat = evaluate_forward(problem.forward, theta_hat)
    dtheta = theta_hat - theta_hat.mean(axis=0)
    dy = y_hat - y_hat.mean(axis=0)
    C_ty = dtheta.T @ dy / (J - 1)
    C_yy = symmetrize(dy.T @ dy / (J - 1) + hp.sigma_nu)
    L = cholesky_psd(C_yy)
    innov = problem.y_obs - y_hat - nu
    gain_innov = cho_solve((L, True), innov.T).T @ C_ty.T
    return Ensemble(theta_hat + gain_innov, rng_seed=ens.rng_seed)


# --- driver ------------------------------------------------------------------


def _physical(problem: InverseProblem, theta: np.ndarray) -> np.ndarray:
    phi = problem.metadata.get("constrained_to")
    return theta if phi is None else phi(theta)


def make_record(
    iteration: int,
    problem: InverseProblem,
    mean: np.ndarray,
    cov: np.ndarray,
    record_misfit: bool = True,
) -> ConvergenceRecord:
    param_error = None
    if problem.theta_ref is not None:
        param_error = float(
            np.linalg.norm(_physical(problem, mean) - _physical(problem, problem.theta_ref))
        )
    return ConvergenceRecord(
        iteration=iteration,
        mean=np.array(mean, copy=True),
        cov_frobenius=float(np.linalg.norm(cov)),
        misfit=problem.misfit(mean) if record_misfit else float("nan"),
        param_error=param_error,
        relative_field_error=None if problem.field_error is None else float(problem.field_error(mean)),
    )


def run(
    method: str,
    problem: InverseProblem,
    hp: HyperParams,
    init: Union[GaussianState, Ensemble],
    n_iters: int,
    rng: np.random.Generator | int | None = None,
    jacobian: Callable | None = None,
    record_misfit: bool = True,
    callback: Callable[[ConvergenceRecord], None] | None = None,
) -> RunResult:
    """Iterate ``method`` ``n_iters`` times against the fixed data ``problem.y_obs``.

    Returns one record per completed iteration. On failure the exception
    carries the completed records in its ``history`` attribute.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")

    if method == "eki":
        if not isinstance(init, Ensemble):
            raise TypeError("EKI needs an Ensemble initialisation")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(init.rng_seed if rng is None else rng)
    elif not isinstance(init, GaussianState):
        raise TypeError(f"{method} needs a GaussianState initialisation")
    if method == "kf" and problem.matrix is None:
        raise ValueError(f"problem {problem.name!r} is not linear; kf is unavailable")
    if method == "exki" and jacobian is None and problem.jacobian is None:
        raise JacobianUnavailable(
            f"problem {problem.name!r} provides no Jacobian; enable the finite-difference fallback"
        )

    history: list[ConvergenceRecord] = []
    state = init
    n_evals = 0
    for it in range(1, n_iters + 1):
        try:
            if method == "uki":
                state = uki_step(state, problem, hp)
                n_evals += 2 * problem.n_theta + 1
            elif method == "exki":
                state = exki_step(state, problem, hp, jacobian)
                n_evals += 1
            elif method == "kf":
                state = kalman_step(state, problem.matrix, problem.y_obs, hp)
            else:
                state = eki_step(state, problem, hp, rng)
                n_evals += state.size
            mean, cov = state.mean, state.cov
            rec = make_record(it, problem, mean, cov, record_misfit)
        except KalinvError as exc:
            exc.history = history
            raise
        history.append(rec)
        log.debug("%s iter %d misfit %.6g", method, it, rec.misfit)
        if callback is not None:
            callback(rec)
    return RunResult(method, history, state, n_evals)


def initial_state(problem: InverseProblem, hp: HyperParams) -> GaussianState:
    """``m0 = r0``, ``C0 = gamma I``."""
    return GaussianState(hp.r0.copy(), hp.gamma * np.eye(problem.n_theta))


# --- averaged landscape --------------------------------------------------------


@dataclass
class Landscape:
    r: np.ndarray
    averaged: np.ndarray  # E[g(x)], x ~ N(r, sigma_r^2)
    averaged_gradient: np.ndarray  # Cov[g(x), x] / sigma_r^2
    values: np.ndarray = field(default=None)  # g at every quadrature node, (n_r, order)


def averaged_landscape_1d(
    g: Callable[[float], float],
    r_grid: Sequence[float],
    sigma_r: float,
    quad_order: int = 16,
) -> Landscape:
    """Gaussian-smoothed value and gradient of a scalar map by Gauss-Hermite quadrature."""
    if sigma_r <= 0:
        raise ValueError("sigma_r must be positive")
    if quad_order < 8:
        raise ValueError("quad_order must be at least 8")
    z, w = np.polynomial.hermite_e.hermegauss(quad_order)
    w = w / math.sqrt(2.0 * math.pi)
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    vals = np.empty((r_grid.size, quad_order))
    for i, r in enumerate(r_grid):
        for k, zk in enumerate(z):
            v = float(np.squeeze(g(r + sigma_r * zk)))
            if not math.isfinite(v):
                raise NonFiniteForwardValue(
                    f"non-finite value at x = {r + sigma_r * zk!r}", index=k
                )
            vals[i, k] = v
    mean = vals @ w
    grad = ((vals - mean[:, None]) * z[None, :]) @ w / sigma_r
    return Landscape(r_grid, mean, grad, vals)
