import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kalinv.engines import HyperParams, initial_state
from kalinv.errors import NoConvergence, SingularNormalEquations
from kalinv.gaussian import GaussianState
from kalinv.problems.linear import linear2
from kalinv.theory import (
    LinearProblemSpec,
    algebraic_law_check,
    decay_rate,
    divergence_bound_check,
    fd_gradient,
    kalman_iterates,
    minimize_phi_r,
    phi_r,
    pinv_eig,
    remark1_spec,
    solve_steady_covariance,
    steady_state_residual,
)

from conftest import random_spd


def _spec(variant, alpha):
    prob = linear2(variant)
    hp = HyperParams.for_problem(prob, alpha=alpha)
    return prob, hp, LinearProblemSpec.from_problem(prob, hp)


@pytest.mark.parametrize("variant", ["NS", "OD"])
@pytest.mark.parametrize("alpha", [0.5, 0.9, 1.0])
def test_kalman_iterates_reach_oracle(variant, alpha):
    prob, hp, spec = _spec(variant, alpha)
    steady = solve_steady_covariance(spec, gamma=prob.gamma)
    assert steady_state_residual(spec, steady.c_inf) < 1e-8
    last = kalman_iterates(spec, initial_state(prob, hp), 500)[-1]
    assert np.linalg.norm(last.mean - steady.m_inf) < 1e-8
    assert np.linalg.norm(last.cov - steady.c_inf) < 1e-8


def test_alpha_one_limit_is_least_squares():
    prob, hp, spec = _spec("OD", 1.0)
    steady = solve_steady_covariance(spec)
    ls = np.linalg.lstsq(prob.matrix, prob.y_obs, rcond=None)[0]
    np.testing.assert_allclose(steady.m_inf, ls, atol=1e-12)


def test_ud_alpha_half_regularized_limit():
    _, _, spec = _spec("UD", 0.5)
    steady = solve_steady_covariance(spec)
    np.testing.assert_allclose(steady.m_inf, [0.597, 1.195], atol=1e-3)


def test_ud_alpha_one_has_no_steady_covariance():
    _, _, spec = _spec("UD", 1.0)
    with pytest.raises(NoConvergence):
        solve_steady_covariance(spec, max_iter=2000)


def test_singular_normal_equations():
    _, _, spec = _spec("UD", 1.0)
    with pytest.raises(SingularNormalEquations):
        minimize_phi_r(spec, np.eye(2))


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.2, 0.95))
def test_phi_r_gradient_vanishes_at_limit(seed, alpha):
    rng = np.random.default_rng(seed)
    n, m = 3, 4
    spec = LinearProblemSpec(
        rng.standard_normal((m, n)), rng.standard_normal(m), random_spd(rng, m), random_spd(rng, n), alpha, rng.standard_normal(n)
    )
    steady = solve_steady_covariance(spec)
    g = fd_gradient(lambda t: phi_r(spec, steady.c_hat_inf, t), steady.m_inf)
    assert np.linalg.norm(g) < 1e-6 * (1 + abs(phi_r(spec, steady.c_hat_inf, steady.m_inf)))


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.0])
def test_closed_form_steady_state(alpha):
    prob = linear2("OD")
    spec, c_star = remark1_spec(prob.matrix, prob.sigma_eta, prob.y_obs, alpha)
    steady = solve_steady_covariance(spec)
    np.testing.assert_allclose(steady.c_inf, c_star, atol=1e-10)
    np.testing.assert_allclose(steady.c_hat_inf, 2 * c_star, atol=1e-10)


def test_algebraic_law_on_underdetermined_system():
    prob = linear2("UD")
    rep = algebraic_law_check(prob.matrix, 2 * prob.sigma_eta, 0.25 * np.eye(2), np.zeros(2), prob.y_obs, 50)
    assert rep.max_cov_residual < 1e-10
    assert rep.max_mean_residual < 1e-10
    # unobserved direction never moves; observed block grows like nS
    assert rep.unobserved_drift.max() < 1e-12
    assert rep.observed_limit_error[-1] < rep.observed_limit_error[0]


def test_algebraic_law_with_general_prior(rng):
    G = rng.standard_normal((2, 4))
    rep = algebraic_law_check(G, random_spd(rng, 2), random_spd(rng, 4), rng.standard_normal(4), rng.standard_normal(2), 30)
    assert rep.max_cov_residual < 1e-9
    assert rep.max_mean_residual < 1e-10


def test_divergence_bound_holds_while_covariance_grows():
    prob, hp, spec = _spec("UD", 1.0)
    rep = divergence_bound_check(spec, 200, C0=0.25 * np.eye(2), m0=np.zeros(2))
    assert rep.min_margin >= -1e-10
    assert rep.cov_norms[-1] > 10 * rep.cov_norms[1]
    np.testing.assert_allclose(rep.means[-1], [0.6, 1.2], atol=1e-6)


def test_divergence_bound_requires_alpha_one():
    _, _, spec = _spec("UD", 0.5)
    with pytest.raises(ValueError):
        divergence_bound_check(spec, 3)


def test_pinv_eig_matches_numpy(rng):
    v = rng.standard_normal((3, 1))
    S = v @ v.T
    np.testing.assert_allclose(pinv_eig(S), np.linalg.pinv(S), atol=1e-12)


def test_decay_rate_of_geometric_sequence():
    assert decay_rate(0.5 ** np.arange(30)) == pytest.approx(np.log(0.5))
    with pytest.raises(ValueError):
        decay_rate(np.zeros(10))


def test_spec_shape_checks():
    with pytest.raises(ValueError):
        LinearProblemSpec(np.eye(2), np.zeros(3), np.eye(2), np.eye(2), 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        LinearProblemSpec(np.eye(2), np.zeros(2), np.eye(3), np.eye(2), 1.0, np.zeros(2))


def test_kalman_iterates_start_at_init():
    prob, hp, spec = _spec("NS", 1.0)
    init = GaussianState(np.ones(2), np.eye(2))
    states = kalman_iterates(spec, init, 3)
    assert len(states) == 4 and states[0] is init
