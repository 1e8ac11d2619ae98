"""The inverse problem container, observation noise, and constraint transforms."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

Forward = Callable[[np.ndarray], np.ndarray]


@dataclass
class InverseProblem:
    """Find ``theta`` from ``y_obs = forward(theta) + eta``, ``eta ~ N(0, sigma_eta)``.

    ``matrix`` is set when the forward map is exactly linear, which enables
    the closed-form Kalman step. ``field_error`` maps a parameter vector to a
    problem-specific relative error (for instance of a reconstructed field).
    """

    name: str
    n_theta: int
    forward: Forward
    y_obs: np.ndarray
    sigma_eta: np.ndarray
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    theta_ref: Optional[np.ndarray] = None
    field_error: Optional[Callable[[np.ndarray], float]] = None
    matrix: Optional[np.ndarray] = None
    r0: Optional[np.ndarray] = None
    gamma: float = 1.0
    ensemble_size: Optional[int] = None
    y_ref: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y_obs = np.atleast_1d(np.asarray(self.y_obs, dtype=float))
        self.sigma_eta = np.atleast_2d(np.asarray(self.sigma_eta, dtype=float))
        if self.sigma_eta.shape != (self.n_y, self.n_y):
            raise ValueError(
                f"sigma_eta has shape {self.sigma_eta.shape}, expected {(self.n_y, self.n_y)}"
            )
        if self.theta_ref is not None:
            self.theta_ref = np.atleast_1d(np.asarray(self.theta_ref, dtype=float))
        if self.r0 is None:
            self.r0 = np.zeros(self.n_theta)
        self.r0 = np.atleast_1d(np.asarray(self.r0, dtype=float))

    @property
    def n_y(self) -> int:
        return self.y_obs.size

    def misfit(self, theta: np.ndarray, g: np.ndarray | None = None) -> float:
        """Data misfit ``0.5 |sigma_eta^{-1/2} (y - G(theta))|^2``."""
        if g is None:
            g = self.forward(theta)
        r = self.y_obs - np.asarray(g, dtype=float)
        return 0.5 * float(r @ np.linalg.solve(self.sigma_eta, r))


def linear_problem(name, G, y, sigma_eta, **kwargs) -> InverseProblem:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    return InverseProblem(
        name=name,
        n_theta=G.shape[1],
        forward=lambda theta: G @ theta,
        jacobian=lambda theta: G,
        y_obs=y,
        sigma_eta=sigma_eta,
        matrix=G,
        **kwargs,
    )


def add_noise(y_ref: np.ndarray, level: float, seed=None) -> np.ndarray:
    """Multiplicative Gaussian noise: ``y_ref + (level * y_ref) * xi``."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    y_ref = np.asarray(y_ref, dtype=float)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(y_ref.shape)
    return y_ref + level * y_ref * xi


# --- constraint transforms -------------------------------------------------


def nonneg_transform(theta):
    return np.abs(theta)


def box_transform(theta, theta_min, theta_max):
    return theta_min + (theta_max - theta_min) / (1.0 + np.abs(theta))


def box_inverse(value, theta_min, theta_max):
    """A non-negative preimage of ``value`` under the box transform."""
    return (theta_max - theta_min) / (np.asarray(value) - theta_min) - 1.0


def constrain(problem: InverseProblem, transform: str, theta_min=None, theta_max=None):
    """Wrap ``problem`` so the inversion runs in unconstrained coordinates.

    ``transform`` is ``"nonneg"`` (``phi = |t|``) or ``"box"``
    (``phi = lo + (hi - lo) / (1 + |t|)``), applied element-wise.
    """
    if transform == "nonneg":
        phi = nonneg_transform

        def phi_inv(v):
            return np.asarray(v, dtype=float)

        def dphi(t):
            return np.sign(t)

    elif transform == "box":
        lo = np.broadcast_to(np.asarray(theta_min, dtype=float), (problem.n_theta,))
        hi = np.broadcast_to(np.asarray(theta_max, dtype=float), (problem.n_theta,))
        if np.any(lo >= hi):
            raise ValueError("box constraint requires theta_min < theta_max element-wise")

        def phi(t):
            return box_transform(t, lo, hi)

        def phi_inv(v):
            return box_inverse(v, lo, hi)

        def dphi(t):
            return -(hi - lo) * np.sign(t) / (1.0 + np.abs(t)) ** 2

    else:
        raise ValueError(f"unknown transform {transform!r}")

    base_forward = problem.forward

    def forward(theta):
        return base_forward(phi(np.asarray(theta, dtype=float)))

    jacobian = None
    if problem.jacobian is not None:
        base_jac = problem.jacobian

        def jacobian(theta):
            theta = np.asarray(theta, dtype=float)
            return np.atleast_2d(base_jac(phi(theta))) * dphi(theta)[None, :]

    field_error = None
    if problem.field_error is not None:
        base_err = problem.field_error

        def field_error(theta):
            return base_err(phi(np.asarray(theta, dtype=float)))

    theta_ref = None if problem.theta_ref is None else phi_inv(problem.theta_ref)
    meta = dict(problem.metadata, transform=transform, constrained_to=phi)
    return replace(
        problem,
        name=f"{problem.name}[{transform}]",
        forward=forward,
        jacobian=jacobian,
        field_error=field_error,
        theta_ref=theta_ref,
        matrix=None,
        metadata=meta,
    )
