"""Gaussian states, the modified unscented transform and Gaussian conditioning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DimensionMismatch, FactorizationFailed

JITTER_SCHEDULE = (0.0, 1e-14, 1e-12, 1e-10, 1e-8)


def symmetrize(C: np.ndarray) -> np.ndarray:
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class GaussianState:
    """Mean and covariance of the current parameter estimate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaPointSet:
    """Symmetric quadrature nodes of the modified unscented transform.

    ``points`` has shape ``(2 N + 1, N)``; row 0 is the generating mean and
    rows ``j`` and ``j + N`` are mirror images about it.
    """

    points: np.ndarray
    cov_weight: float
    spread: float
    center_index: int = 0

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def center(self) -> np.ndarray:
        return self.points[self.center_index]


@dataclass(frozen=True)
class JointGaussian:
    mean_theta: np.ndarray
    mean_y: np.ndarray
    cov_theta: np.ndarray
    cov_theta_y: np.ndarray
    cov_yy: np.ndarray


def cholesky_with_jitter(C: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``C + delta I`` and the accepted ``delta``.

    ``delta`` escalates through ``JITTER_SCHEDULE`` scaled by the mean
    diagonal entry; the first factorization that succeeds wins.
    """
    C = symmetrize(np.atleast_2d(np.asarray(C, dtype=float)))
    n = C.shape[0]
    if not np.all(np.isfinite(C)):
        raise FactorizationFailed("matrix has non-finite entries")
    scale = np.trace(C) / n + 1e-300
    eye = np.eye(n)
    for factor in JITTER_SCHEDULE:
        delta = factor * scale
        try:
            L = np.linalg.cholesky(C + delta * eye if delta else C)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, delta
    raise FactorizationFailed(
        f"matrix is not positive semidefinite (min eigenvalue "
        f"{np.linalg.eigvalsh(C).min():.3e}, mean diagonal {scale:.3e})"
    )


def cholesky_psd(C: np.ndarray) -> np.ndarray:
    return cholesky_with_jitter(C)[0]


def default_spread(n_theta: int) -> float:
    return min(math.sqrt(4.0 / n_theta), 1.0)


def sigma_points(state: GaussianState, a: float | None = None) -> SigmaPointSet:
    """Generate the ``2 N + 1`` sigma points of ``state``.

    Columns of the Cholesky factor are scaled by ``c = a sqrt(N)``; the
    covariance weight ``1 / (2 a^2 N)`` makes the weighted outer products
    of the deviations reproduce the covariance exactly.
    """
    n = state.dim
    if a is None:
        a = default_spread(n)
    if a <= 0:
        raise ValueError("spread parameter a must be positive")
    L = cholesky_psd(state.cov)
    c = a * math.sqrt(n)
    offsets = c * L.T  # row j is c times column j of L
    points = np.empty((2 * n + 1, n))
    points[0] = state.mean
    points[1 : n + 1] = state.mean + offsets
    points[n + 1 :] = state.mean - offsets
    return SigmaPointSet(points=points, cov_weight=1.0 / (2.0 * a * a * n), spread=a)


def unscented_joint(
    points: SigmaPointSet,
    g_values: np.ndarray,
    prior_cov: np.ndarray,
    noise_cov: np.ndarray,
) -> JointGaussian:
    """Joint Gaussian of (theta, G(theta)) by the first-order-mean quadrature.

    The mean of ``G`` is its value at the centre point, and both deviation
    sums use that centre value.
    """
    g_values = np.asarray(g_values, dtype=float)
    if g_values.ndim == 1:
        g_values = g_values[:, None]
    if g_values.shape[0] != points.points.shape[0]:
        raise DimensionMismatch(
            f"expected {points.points.shape[0]} forward values, got {g_values.shape[0]}"
        )
    center = points.center_index
    theta0 = points.points[center]
    g0 = g_values[center]
    mask = np.arange(points.points.shape[0]) != center
    dtheta = points.points[mask] - theta0
    dg = g_values[mask] - g0
    w = points.cov_weight
    noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    return JointGaussian(
        mean_theta=theta0.copy(),
        mean_y=g0.copy(),
        cov_theta=np.atleast_2d(np.asarray(prior_cov, dtype=float)),
        cov_theta_y=w * dtheta.T @ dg,
        cov_yy=symmetrize(w * dg.T @ dg + noise_cov),
    )


def gaussian_condition(joint: JointGaussian, y_obs: np.ndarray) -> GaussianState:
    """Condition the joint Gaussian on ``y = y_obs``."""
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if y_obs.shape != joint.mean_y.shape:
        raise DimensionMismatch(
            f"observation length {y_obs.size} does not match {joint.mean_y.size}"
        )
    L = cholesky_psd(joint.cov_yy)
    rhs = np.column_stack([y_obs - joint.mean_y, joint.cov_theta_y.T])
    sol = cho_solve((L, True), rhs)
    mean = joint.mean_theta + joint.cov_theta_y @ sol[:, 0]
    cov = joint.cov_theta - joint.cov_theta_y @ sol[:, 1:]
    return GaussianState(mean, symmetrize(cov))


def is_psd(C: np.ndarray, tol: float = 0.0) -> bool:
    """True if the smallest eigenvalue is at least ``-tol * max(1, |C|)``."""
    C = symmetrize(np.atleast_2d(C))
    if not np.all(np.isfinite(C)):
        return False
    eig = np.linalg.eigvalsh(C)
    return eig[0] >= -tol * max(1.0, abs(eig).max())
