"""Unscented Kalman sampler and a random-walk Metropolis reference sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .engines import evaluate_forward
from .errors import KalinvError, UnstableStep
from .gaussian import GaussianState, cholesky_psd, default_spread, symmetrize
from .problems.base import InverseProblem


@dataclass
class BayesianSpec:
    """Prior ``N(r0, prior_cov)`` and likelihood ``y = G(theta) + N(0, sigma_eta)``."""

    r0: np.ndarray
    prior_cov: np.ndarray
    forward: Callable[[np.ndarray], np.ndarray]
    y: np.ndarray
    sigma_eta: np.ndarray
    matrix: Optional[np.ndarray] = None
    batch_forward: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.batch_forward is None and self.matrix is not None:
            G = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            self.batch_forward = lambda points: points @ G.T
        self.r0 = np.atleast_1d(np.asarray(self.r0, dtype=float))
        self.prior_cov = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.sigma_eta = np.atleast_2d(np.asarray(self.sigma_eta, dtype=float))
        for name in ("prior_cov", "sigma_eta"):
            if np.linalg.eigvalsh(symmetrize(getattr(self, name)))[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
        self.prior_prec = np.linalg.inv(self.prior_cov)
        self.noise_prec = np.linalg.inv(self.sigma_eta)

    @classmethod
    def from_problem(cls, problem: InverseProblem, prior_cov=None, r0=None) -> "BayesianSpec":
        prior_cov = np.eye(problem.n_theta) if prior_cov is None else prior_cov
        return cls(
            problem.r0 if r0 is None else r0,
            prior_cov,
            problem.forward,
            problem.y_obs,
            problem.sigma_eta,
            problem.matrix,
        )

    @property
    def dim(self) -> int:
        return self.r0.size

    def neg_log_posterior(self, theta: np.ndarray) -> float:
        r = self.y - np.asarray(self.forward(theta), dtype=float)
        d = theta - self.r0
        return 0.5 * float(r @ self.noise_prec @ r) + 0.5 * float(d @ self.prior_prec @ d)

    def linear_posterior(self) -> GaussianState:
        """Closed-form posterior, available when ``matrix`` is set."""
        if self.matrix is None:
            raise ValueError("closed-form posterior needs a linear forward map")
        G = self.matrix
        prec = self.prior_prec + G.T @ self.noise_prec @ G
        cov = np.linalg.inv(prec)
        mean = cov @ (G.T @ self.noise_prec @ self.y + self.prior_prec @ self.r0)
        return GaussianState(mean, cov)


@njit(cache=True)
def _cholesky_lower(C):
    """Lower Cholesky factor; the flag is False if ``C`` is not positive definite."""
    n = C.shape[0]
    L = np.zeros_like(C)
    for j in range(n):
        s = C[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return L, False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            t = C[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L, True


@njit(cache=True)
def _sigma_point_array(m, L, c):
    n = m.size
    pts = np.empty((2 * n + 1, n))
    pts[0] = m
    for j in range(n):
        for i in range(n):
            pts[1 + j, i] = m[i] + c * L[i, j]
            pts[1 + n + j, i] = m[i] - c * L[i, j]
    return pts


@njit(cache=True)
def _uks_core(m, C, points, g, prior_prec, noise_prec, y, r0, h, weight):
    n = m.size
    g0 = g[0]
    C_ty = weight * ((points[1:] - m).T @ (g[1:] - g0))
    CP = C @ prior_prec
    lhs = np.eye(n) + h * CP
    rhs = m + h * (C_ty @ (noise_prec @ (y - g0)) + CP @ r0)
    m_new = np.linalg.solve(lhs, rhs)
    C_new = (C - 2.0 * h * (C_ty @ noise_prec @ C_ty.T + CP @ C)) / (1.0 - 2.0 * h)
    C_new = 0.5 * (C_new + C_new.T)
    L_new, ok = _cholesky_lower(C_new)
    return m_new, C_new, L_new, ok


def _uks_update(m, C, L, spec: BayesianSpec, h: float, a: float):
    """Advance ``(m, C)`` one step; ``L`` is the lower Cholesky factor of ``C``.

    Returns the new mean, covariance and covariance factor.
    """
    if not h < 0.5:
        raise UnstableStep(f"time step h = {h} is unstable (need h < 1/2)")
    n = m.size
    points = _sigma_point_array(m, L, a * math.sqrt(n))
    if spec.batch_forward is not None:
        g = np.atleast_2d(np.asarray(spec.batch_forward(points), dtype=float))
        if not np.all(np.isfinite(g)):
            g = evaluate_forward(spec.forward, points, threads=1)
    else:
        g = evaluate_forward(spec.forward, points, threads=1)
    m_new, C_new, L_new, ok = _uks_core(
        m, C, points, g, spec.prior_prec, spec.noise_prec, spec.y, spec.r0, h, 1.0 / (2.0 * a * a * n)
    )
    if not ok:
        raise UnstableStep(f"covariance lost positive definiteness with h = {h}")
    return m_new, C_new, L_new


def uks_step(state: GaussianState, spec: BayesianSpec, h: float, a: float | None = None) -> GaussianState:
    """One semi-implicit step of the unscented mean/covariance flow.

    The prior damping of the mean and the ``+2C`` term of the covariance are
    taken implicitly; the remaining terms use the current state. Raises
    ``UnstableStep`` if the new covariance is not positive definite.
    """
    if h <= 0:
        raise ValueError("time step must be positive")
    a = default_spread(state.dim) if a is None else a
    L = cholesky_psd(state.cov)
    m, C, _ = _uks_update(state.mean, state.cov, L, spec, h, a)
    return GaussianState(m, C)


@dataclass
class UKSRecord:
    step: int
    time: float
    mean: np.ndarray
    cov: np.ndarray
    mean_error: Optional[float] = None
    cov_error: Optional[float] = None


@dataclass
class UKSResult:
    history: list[UKSRecord]
    final: GaussianState
    n_steps: int
    reference: Optional[GaussianState] = None


def run_uks(
    spec: BayesianSpec,
    init: GaussianState,
    h: float,
    t_end: float,
    record_every: int | None = None,
    a: float | None = None,
) -> UKSResult:
    """Integrate to ``t_end`` with ``ceil(t_end / h)`` fixed steps.

    Records roughly 1000 snapshots (every ``record_every`` steps, plus the
    last). For linear specs each record carries the distance to the exact
    posterior.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n_steps = math.ceil(t_end / h - 1e-9) if t_end > 0 else 0
    record_every = record_every or max(1, n_steps // 1000)
    ref = spec.linear_posterior() if spec.matrix is not None else None

    def record(k, s):
        rec = UKSRecord(k, k * h, s.mean.copy(), s.cov.copy())
        if ref is not None:
            rec.mean_error = float(np.linalg.norm(s.mean - ref.mean))
            rec.cov_error = float(np.linalg.norm(s.cov - ref.cov))
        return rec

    if h <= 0:
        raise ValueError("time step must be positive")
    a = default_spread(init.dim) if a is None else a
    history = [record(0, init)]
    m, C = init.mean, init.cov
    L = cholesky_psd(C)
    for k in range(1, n_steps + 1):
        try:
            m, C, L = _uks_update(m, C, L, spec, h, a)
        except KalinvError as exc:
            exc.history = history
            raise
        if k % record_every == 0 or k == n_steps:
            history.append(record(k, GaussianState(m, C)))
    return UKSResult(history, GaussianState(m, C), n_steps, ref)


@dataclass
class MetropolisResult:
    mean: np.ndarray
    cov: np.ndarray
    acceptance_rate: float
    n_kept: int
    standard_error: np.ndarray = field(default=None)  # naive, ignores autocorrelation
    samples: Optional[np.ndarray] = None


def rw_metropolis(
    spec: BayesianSpec,
    n_samples: int,
    step_size: float,
    burn_in: int,
    seed: int = 0,
    init: np.ndarray | None = None,
    keep_samples: bool = False,
) -> MetropolisResult:
    """Random-walk Metropolis with proposal covariance ``step_size^2 * prior_cov``.

    ``n_samples`` counts every chain state, including the first ``burn_in``
    that are discarded.
    """
    if n_samples <= burn_in:
        raise ValueError("n_samples must exceed burn_in")
    rng = np.random.default_rng(seed)
    n = spec.dim
    L = np.linalg.cholesky(spec.prior_cov) * step_size
    x = spec.r0.copy() if init is None else np.asarray(init, dtype=float).copy()
    f = spec.neg_log_posterior(x)
    n_keep = n_samples - burn_in
    total = np.zeros(n)
    outer = np.zeros((n, n))
    samples = np.empty((n_keep, n)) if keep_samples else None
    accepted = 0
    chunk = 100_000
    i = 0
    while i < n_samples:
        m = min(chunk, n_samples - i)
        steps = rng.standard_normal((m, n)) @ L.T
        log_u = np.log(rng.random(m))
        kept = []
        for k in range(m):
            prop = x + steps[k]
            fp = spec.neg_log_posterior(prop)
            if log_u[k] < f - fp:
                x, f = prop, fp
                accepted += 1
            if i + k >= burn_in:
                kept.append(x)
        if kept:
            block = np.array(kept)
            total += block.sum(axis=0)
            outer += block.T @ block
            if keep_samples:
                start = max(0, i - burn_in)
                samples[start : start + len(kept)] = block
        i += m
    mean = total / n_keep
    cov = (outer - n_keep * np.outer(mean, mean)) / (n_keep - 1)
    return MetropolisResult(
        mean,
        cov,
        accepted / n_samples,
        n_keep,
        standard_error=np.sqrt(np.diag(cov) / n_keep),
        samples=samples,
    )
