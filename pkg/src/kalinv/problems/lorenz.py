"""Parameter estimation from time-averaged statistics of chaotic systems.

Both forward maps are finite-time averages of moments along a trajectory
started from a fixed initial condition, so each map is a deterministic
(but rough) function of its parameters.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import TrajectoryBlowup
from .base import InverseProblem, add_noise, constrain

BLOWUP_NORM = 1e6


# --- Lorenz63 -----------------------------------------------------------------


@njit(cache=True)
def _l63_rhs(x, sigma, r, beta):
    return np.array(
        [sigma * (x[1] - x[0]), x[0] * (r - x[2]) - x[1], x[0] * x[1] - beta * x[2]]
    )


@njit(cache=True)
def _l63_window_averages(x0, sigma, r, beta, dt, n_spin, n_avg, n_windows):
    """RK4 trajectory; per-window sample means of (x, x^2). NaN on blow-up."""
    x = x0.copy()
    out = np.zeros((n_windows, 6))
    for step in range(n_spin + n_avg * n_windows):
        k1 = _l63_rhs(x, sigma, r, beta)
        k2 = _l63_rhs(x + 0.5 * dt * k1, sigma, r, beta)
        k3 = _l63_rhs(x + 0.5 * dt * k2, sigma, r, beta)
        k4 = _l63_rhs(x + dt * k3, sigma, r, beta)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (abs(x[0]) + abs(x[1]) + abs(x[2]) < BLOWUP_NORM):
            out[:, :] = np.nan
            return out
        if step >= n_spin:
            w = (step - n_spin) // n_avg
            for i in range(3):
                out[w, i] += x[i]
                out[w, 3 + i] += x[i] * x[i]
    return out / n_avg


def lorenz63_moments(
    params,
    x0,
    dt: float = 0.01,
    spin_up: float = 30.0,
    window: float = 20.0,
    n_windows: int = 1,
) -> np.ndarray:
    """Window averages of ``(x1, x2, x3, x1^2, x2^2, x3^2)``, shape ``(n_windows, 6)``."""
    sigma, r, beta = (float(p) for p in params)
    out = _l63_window_averages(
        np.asarray(x0, dtype=float),
        sigma,
        r,
        beta,
        dt,
        int(round(spin_up / dt)),
        int(round(window / dt)),
        int(n_windows),
    )
    if not np.all(np.isfinite(out)):
        raise TrajectoryBlowup(
            f"Lorenz63 trajectory exceeded norm {BLOWUP_NORM:g} at (sigma, r, beta) = {params}"
        )
    return out


L63_TRUTH = (10.0, 28.0, 8.0 / 3.0)


def lorenz63(
    variant: str = "one_param",
    seed: int = 0,
    dt: float = 0.01,
    spin_up: float = 30.0,
    window: float = 20.0,
    n_truth_windows: int = 10,
) -> InverseProblem:
    """Learn ``r`` (one_param) or ``(sigma, r, beta)`` (three_param) from time averages.

    Truth data average ``n_truth_windows`` consecutive windows after the
    spin-up; the observation covariance is the sample covariance of those
    window averages. The forward map averages a single window.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(3)
    truth_windows = lorenz63_moments(L63_TRUTH, x0, dt, spin_up, window, n_truth_windows)

    if variant == "one_param":
        cols = [2]
        sigma0, beta0 = L63_TRUTH[0], L63_TRUTH[2]

        def to_params(theta):
            return sigma0, theta[0], beta0

        n_theta = 1
        theta_ref = np.array([L63_TRUTH[1]])
    elif variant == "three_param":
        cols = list(range(6))

        def to_params(theta):
            return theta[0], theta[1], theta[2]

        n_theta = 3
        theta_ref = np.array(L63_TRUTH)
    else:
        raise ValueError(f"unknown lorenz63 variant {variant!r}")

    def forward(theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return lorenz63_moments(to_params(theta), x0, dt, spin_up, window)[0, cols]

    obs = truth_windows[:, cols]
    y = obs.mean(axis=0)
    sigma_eta = np.atleast_2d(np.cov(obs, rowvar=False, ddof=1))
    problem = InverseProblem(
        name=f"lorenz63:{variant}",
        n_theta=n_theta,
        forward=forward,
        y_obs=y,
        sigma_eta=sigma_eta,
        theta_ref=theta_ref,
        r0=np.full(n_theta, 5.0),
        gamma=1.0,
        y_ref=y.copy(),
        metadata={"x0": x0, "window_averages": obs, "dt": dt, "spin_up": spin_up, "window": window},
    )
    if variant == "three_param":
        problem = constrain(problem, "nonneg")
        problem.name = "lorenz63:three_param"
    return problem


# --- multiscale Lorenz96 ---------------------------------------------------------

HERMITE_NODES = np.array([-20.0, -12.0, -4.0, 4.0, 12.0, 20.0])


@njit(cache=True)
def _hermite_eval(x, nodes, dofs):
    """Cubic Hermite interpolant with DOFs [v0, s0, v1, s1, ...]; x clamped to the node range."""
    lo = nodes[0]
    hi = nodes[nodes.size - 1]
    if x < lo:
        x = lo
    elif x > hi:
        x = hi
    e = 0
    while e < nodes.size - 2 and x > nodes[e + 1]:
        e += 1
    h = nodes[e + 1] - nodes[e]
    t = (x - nodes[e]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return (
        dofs[2 * e] * h00
        + h * dofs[2 * e + 1] * h10
        + dofs[2 * e + 2] * h01
        + h * dofs[2 * e + 3] * h11
    )


def hermite_closure(x, dofs, nodes=HERMITE_NODES):
    dofs = np.asarray(dofs, dtype=float)
    return np.array([_hermite_eval(float(v), nodes, dofs) for v in np.atleast_1d(x)])


@njit(cache=True)
def _l96_full_rhs(X, Y, F, h, c, b):
    K = X.size
    JK = Y.size
    J = JK // K
    dX = np.empty(K)
    dY = np.empty(JK)
    coup = h * c / b
    for k in range(K):
        s = 0.0
        for j in range(J):
            s += Y[k * J + j]
        dX[k] = -X[(k - 1) % K] * (X[(k - 2) % K] - X[(k + 1) % K]) - X[k] + F - coup * s
    for i in range(JK):
        dY[i] = (
            -c * b * Y[(i + 1) % JK] * (Y[(i + 2) % JK] - Y[(i - 1) % JK])
            - c * Y[i]
            + coup * X[i // J]
        )
    return dX, dY


@njit(cache=True)
def _l96_full_moments(X0, Y0, F, h, c, b, dt, n_spin, n_avg, n_obs):
    X = X0.copy()
    Y = Y0.copy()
    acc = np.zeros(2 * n_obs)
    for step in range(n_spin + n_avg):
        k1x, k1y = _l96_full_rhs(X, Y, F, h, c, b)
        k2x, k2y = _l96_full_rhs(X + 0.5 * dt * k1x, Y + 0.5 * dt * k1y, F, h, c, b)
        k3x, k3y = _l96_full_rhs(X + 0.5 * dt * k2x, Y + 0.5 * dt * k2y, F, h, c, b)
        k4x, k4y = _l96_full_rhs(X + dt * k3x, Y + dt * k3y, F, h, c, b)
        X = X + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        Y = Y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if not (np.abs(X).max() < BLOWUP_NORM):
            acc[:] = np.nan
            return acc
        if step >= n_spin:
            for k in range(n_obs):
                acc[k] += X[k]
                acc[n_obs + k] += X[k] * X[k]
    return acc / n_avg


@njit(cache=True)
def _l96_reduced_rhs(X, F, nodes, dofs):
    K = X.size
    dX = np.empty(K)
    for k in range(K):
        dX[k] = (
            -X[(k - 1) % K] * (X[(k - 2) % K] - X[(k + 1) % K])
            - X[k]
            + F
            + _hermite_eval(X[k], nodes, dofs)
        )
    return dX


@njit(cache=True)
def _l96_reduced_moments(X0, F, nodes, dofs, dt, n_spin, n_avg, n_obs):
    X = X0.copy()
    acc = np.zeros(2 * n_obs)
    for step in range(n_spin + n_avg):
        k1 = _l96_reduced_rhs(X, F, nodes, dofs)
        k2 = _l96_reduced_rhs(X + 0.5 * dt * k1, F, nodes, dofs)
        k3 = _l96_reduced_rhs(X + 0.5 * dt * k2, F, nodes, dofs)
        k4 = _l96_reduced_rhs(X + dt * k3, F, nodes, dofs)
        X = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (np.abs(X).max() < BLOWUP_NORM):
            acc[:] = np.nan
            return acc
        if step >= n_spin:
            for k in range(n_obs):
                acc[k] += X[k]
                acc[n_obs + k] += X[k] * X[k]
    return acc / n_avg


def lorenz96_multiscale(
    seed: int = 0,
    K: int = 8,
    J: int = 32,
    F: float = 20.0,
    c: float = 10.0,
    b: float = 10.0,
    h: float = 1.0,
    dt: float = 5e-3,
    window: float = 1000.0,
    spin_up: float = 10.0,
    n_observed: int = 4,
    noise_level: float = 0.0,
) -> InverseProblem:
    """Learn a 12-DOF Hermite closure of the fast variables from slow-variable moments.

    Observations are time averages of ``X_k`` and ``X_k^2`` for the first
    ``n_observed`` slow variables. Truth runs the coupled system; the forward
    map runs the closed single-scale system from its own fixed start.
    """
    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal(K)
    Y0 = 0.01 * rng.standard_normal(J * K)
    X0_reduced = rng.standard_normal(K)
    n_spin = int(round(spin_up / dt))
    n_avg = int(round(window / dt))

    y_ref = _l96_full_moments(X0, Y0, F, h, c, b, dt, n_spin, n_avg, n_observed)
    if not np.all(np.isfinite(y_ref)):
        raise TrajectoryBlowup("multiscale Lorenz96 truth trajectory blew up")
    y_obs = add_noise(y_ref, noise_level, seed + 1)

    def forward(theta):
        dofs = np.asarray(theta, dtype=float)
        out = _l96_reduced_moments(X0_reduced, F, HERMITE_NODES, dofs, dt, n_spin, n_avg, n_observed)
        if not np.all(np.isfinite(out)):
            raise TrajectoryBlowup("reduced Lorenz96 trajectory blew up")
        return out

    return InverseProblem(
        name="lorenz96",
        n_theta=2 * HERMITE_NODES.size,
        forward=forward,
        y_obs=y_obs,
        sigma_eta=np.diag(0.05**2 * y_obs * y_obs),
        r0=np.zeros(2 * HERMITE_NODES.size),
        gamma=1.0,
        y_ref=y_ref,
        metadata={"K": K, "J": J, "F": F, "n_observed": n_observed, "X0_reduced": X0_reduced},
    )
