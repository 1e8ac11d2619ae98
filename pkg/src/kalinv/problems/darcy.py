"""Darcy flow on the unit square with a Karhunen-Loeve log-permeability."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from ..errors import SolveFailure
from .base import InverseProblem, add_noise

LATTICE_MAX = 32


def kl_lattice(tau: float = 3.0, d: float = 2.0, lattice_max: int = LATTICE_MAX):
    """Lattice indices ``l != (0, 0)`` sorted by descending eigenvalue.

    Ties (equal ``|l|``) are broken lexicographically on ``(l1, l2)``.
    Returns the ``(M, 2)`` index array and the eigenvalues.
    """
    l1, l2 = np.meshgrid(np.arange(lattice_max + 1), np.arange(lattice_max + 1), indexing="ij")
    l1, l2 = l1.ravel(), l2.ravel()
    keep = (l1 + l2) > 0
    l1, l2 = l1[keep], l2[keep]
    norm2 = l1**2 + l2**2
    order = np.lexsort((l2, l1, norm2))
    idx = np.column_stack([l1[order], l2[order]])
    lam = (np.pi**2 * norm2[order] + tau**2) ** (-d)
    return idx, lam


def kl_eigenfunction(l1: int, l2: int, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    if l2 == 0:
        return np.sqrt(2.0) * np.cos(np.pi * l1 * x1) * np.ones_like(x2)
    if l1 == 0:
        return np.sqrt(2.0) * np.cos(np.pi * l2 * x2) * np.ones_like(x1)
    return 2.0 * np.cos(np.pi * l1 * x1) * np.cos(np.pi * l2 * x2)


@dataclass
class KLField2D:
    """Truncated KL expansion ``log a = sum_k theta_k sqrt(lambda_k) psi_k`` on a grid."""

    grid_n: int
    n_modes: int
    tau: float = 3.0
    d: float = 2.0
    indices: np.ndarray = field(init=False, repr=False)
    eigenvalues: np.ndarray = field(init=False, repr=False)
    basis: np.ndarray = field(init=False, repr=False)  # (n_modes, grid_n, grid_n)

    def __post_init__(self):
        idx, lam = kl_lattice(self.tau, self.d)
        if self.n_modes > len(lam):
            raise ValueError(f"at most {len(lam)} KL modes are available")
        self.indices = idx[: self.n_modes]
        self.eigenvalues = lam[: self.n_modes]
        x = np.linspace(0.0, 1.0, self.grid_n)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        self.basis = np.array([kl_eigenfunction(a, b, X1, X2) for a, b in self.indices])

    def log_field(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        k = theta.size
        if k > self.n_modes:
            raise ValueError(f"field holds {self.n_modes} modes, got {k} coefficients")
        coef = theta * np.sqrt(self.eigenvalues[:k])
        return np.tensordot(coef, self.basis[:k], axes=1)

    def gram(self, k: int | None = None) -> np.ndarray:
        """Trapezoidal-rule inner products of the first ``k`` eigenfunctions."""
        k = self.n_modes if k is None else k
        w = np.full(self.grid_n, 1.0 / (self.grid_n - 1))
        w[[0, -1]] *= 0.5
        W = np.outer(w, w)
        B = self.basis[:k].reshape(k, -1)
        return (B * W.ravel()) @ B.T


def darcy_source(x2: np.ndarray) -> np.ndarray:
    return np.where(x2 <= 4.0 / 6.0, 1000.0, np.where(x2 <= 5.0 / 6.0, 2000.0, 3000.0))


def _source_antiderivative(x2):
    x2 = np.asarray(x2, dtype=float)
    return (
        1000.0 * x2
        + 1000.0 * np.clip(x2 - 4.0 / 6.0, 0.0, None)
        + 1000.0 * np.clip(x2 - 5.0 / 6.0, 0.0, None)
    )


def cell_averaged_source(x2: np.ndarray, h: float) -> np.ndarray:
    """Mean of the piecewise-constant source over ``[x2 - h/2, x2 + h/2]``."""
    return (_source_antiderivative(x2 + h / 2) - _source_antiderivative(x2 - h / 2)) / h


class DarcySolver:
    """Five-point finite differences for ``-div(a grad p) = f``, ``p = 0`` on the boundary.

    Nodes sit at ``i / (N - 1)``; face coefficients are arithmetic means of
    the nodal permeability.
    """

    def __init__(self, grid_n: int, n_obs_side: int = 7):
        if grid_n < 16:
            raise ValueError("grid_n must be at least 16")
        self.n = grid_n
        self.h = 1.0 / (grid_n - 1)
        self.x = np.linspace(0.0, 1.0, grid_n)
        m = grid_n - 2
        X1, X2 = np.meshgrid(self.x[1:-1], self.x[1:-1], indexing="ij")
        self.rhs = cell_averaged_source(X2, self.h).ravel()
        s = np.arange(1, n_obs_side + 1) / (n_obs_side + 1)
        O1, O2 = np.meshgrid(s, s, indexing="ij")
        self.obs_points = np.column_stack([O1.ravel(), O2.ravel()])
        self._m = m

    def assemble(self, a: np.ndarray) -> sp.csc_matrix:
        n, m = self.n, self._m
        h2 = self.h**2
        ax = 0.5 * (a[1:, :] + a[:-1, :])  # faces between i and i+1, shape (n-1, n)
        ay = 0.5 * (a[:, 1:] + a[:, :-1])  # faces between j and j+1, shape (n, n-1)
        # interior node (i, j), i, j in 1..n-2
        east = ax[1:, 1:-1]  # face (i, i+1)
        west = ax[:-1, 1:-1]  # face (i-1, i)
        north = ay[1:-1, 1:]
        south = ay[1:-1, :-1]
        diag = (east + west + north + south) / h2
        k = np.arange(m * m).reshape(m, m)
        rows = [k.ravel()]
        cols = [k.ravel()]
        vals = [diag.ravel()]
        for coef, di, dj in ((east, 1, 0), (west, -1, 0), (north, 0, 1), (south, 0, -1)):
            # neighbours on the boundary carry p = 0 and drop out
            src = (slice(max(0, -di), m - max(0, di)), slice(max(0, -dj), m - max(0, dj)))
            dst = (slice(max(0, di), m + min(0, di)), slice(max(0, dj), m + min(0, dj)))
            rows.append(k[src].ravel())
            cols.append(k[dst].ravel())
            vals.append(-coef[src].ravel() / h2)
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m * m, m * m)
        )
        return A.tocsc()

    def solve(self, a: np.ndarray) -> np.ndarray:
        """Pressure on the full ``N x N`` node grid (zero on the boundary)."""
        A = self.assemble(a)
        p_int = splu(A).solve(self.rhs)
        res = np.linalg.norm(A @ p_int - self.rhs) / np.linalg.norm(self.rhs)
        if not np.isfinite(res) or res > 1e-10:
            raise SolveFailure(f"Darcy solve residual {res:.3e} exceeds 1e-10")
        p = np.zeros((self.n, self.n))
        p[1:-1, 1:-1] = p_int.reshape(self._m, self._m)
        return p

    def observe(self, p: np.ndarray) -> np.ndarray:
        interp = RegularGridInterpolator((self.x, self.x), p, method="linear")
        return interp(self.obs_points)


class DarcyModel:
    def __init__(self, grid_n: int = 80, n_modes: int = 256):
        self.kl = KLField2D(grid_n, n_modes)
        self.solver = DarcySolver(grid_n)

    def pressure(self, theta: np.ndarray) -> np.ndarray:
        return self.solver.solve(np.exp(self.kl.log_field(theta)))

    def forward(self, theta: np.ndarray) -> np.ndarray:
        return self.solver.observe(self.pressure(theta))


def darcy2d(
    grid_n: int = 80,
    n_modes_truth: int = 256,
    n_theta: int = 32,
    seed: int = 0,
    noise_level: float = 0.0,
) -> InverseProblem:
    """Recover the leading ``n_theta`` KL coefficients from 49 pressure readings.

    The truth field uses ``n_modes_truth`` coefficients drawn ``N(0, I)`` from
    ``seed``; the noise draw uses ``seed + 1``.
    """
    if n_theta > n_modes_truth:
        raise ValueError("n_theta cannot exceed n_modes_truth")
    model = DarcyModel(grid_n, n_modes_truth)
    rng = np.random.default_rng(seed)
    theta_truth = rng.standard_normal(n_modes_truth)
    log_a_ref = model.kl.log_field(theta_truth)
    y_ref = model.forward(theta_truth)
    y_obs = add_noise(y_ref, noise_level, seed + 1)
    ref_norm = np.linalg.norm(log_a_ref)

    def field_error(theta):
        return float(np.linalg.norm(model.kl.log_field(theta) - log_a_ref) / ref_norm)

    return InverseProblem(
        name=f"darcy:{grid_n}",
        n_theta=n_theta,
        forward=model.forward,
        y_obs=y_obs,
        sigma_eta=np.eye(y_obs.size),
        theta_ref=theta_truth[:n_theta].copy(),
        field_error=field_error,
        gamma=1.0,
        ensemble_size=100,
        y_ref=y_ref,
        metadata={"model": model, "theta_truth": theta_truth, "log_a_ref": log_a_ref},
    )
