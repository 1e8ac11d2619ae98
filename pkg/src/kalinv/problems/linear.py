"""Small benchmark problems: the 2-parameter linear systems, Hilbert matrices
and the 2-parameter logistic model."""

from __future__ import annotations

import numpy as np

from .base import InverseProblem, linear_problem

MISSPECIFIED_SIGMA = 0.1**2


def linear2(variant: str = "NS") -> InverseProblem:
    """Noiseless 2-parameter systems: well-determined (NS), over- (OD) and under-determined (UD).

    The data carry no noise, but the inversion uses ``sigma_eta = 0.1^2 I``.
    For UD the reference is the minimal-norm solution ``[0.6, 1.2]``.
    """
    variant = variant.upper()
    if variant == "NS":
        G = np.array([[1.0, 2.0], [3.0, 4.0]])
        y = np.array([3.0, 7.0])
        ref = np.array([1.0, 1.0])
    elif variant == "OD":
        G = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        y = np.array([3.0, 7.0, 10.0])
        ref = np.array([1.0 / 3.0, 17.0 / 12.0])
    elif variant == "UD":
        G = np.array([[1.0, 2.0]])
        y = np.array([3.0])
        ref = G.T @ np.linalg.solve(G @ G.T, y)
    else:
        raise ValueError(f"unknown linear2 variant {variant!r}; expected NS, OD or UD")
    return linear_problem(
        f"linear2:{variant}",
        G,
        y,
        MISSPECIFIED_SIGMA * np.eye(len(y)),
        theta_ref=ref,
        gamma=0.25,
        y_ref=y.copy(),
    )


def hilbert_matrix(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return 1.0 / (i[:, None] + i[None, :] - 1.0)


def hilbert(n_theta: int = 10) -> InverseProblem:
    if n_theta < 1:
        raise ValueError("n_theta must be at least 1")
    G = hilbert_matrix(n_theta)
    ref = np.ones(n_theta)
    y = G @ ref
    return linear_problem(
        f"hilbert:{n_theta}",
        G,
        y,
        MISSPECIFIED_SIGMA * np.eye(n_theta),
        theta_ref=ref,
        gamma=0.25,
        ensemble_size=2 * n_theta + 1,
        y_ref=y.copy(),
    )


def logistic(x: float = 0.5, y: float = 0.08, sigma: float = 0.1) -> InverseProblem:
    """One noisy observation of ``1 / (1 + exp(theta_1 + theta_2 x))``."""

    def forward(theta):
        return np.array([1.0 / (1.0 + np.exp(theta[0] + theta[1] * x))])

    def jacobian(theta):
        s = forward(theta)[0]
        d = -s * (1.0 - s)
        return np.array([[d, d * x]])

    return InverseProblem(
        name="logistic",
        n_theta=2,
        forward=forward,
        jacobian=jacobian,
        y_obs=np.array([y]),
        sigma_eta=np.array([[sigma**2]]),
        theta_ref=np.array([2.0, 2.0]),
        r0=np.array([1.0, 1.0]),
        gamma=1.0,
        metadata={"x": x},
    )
