"""Acceptance suite: one test per criterion, each at its stated tolerance and time budget.

Every test prints a single ``criterion N: PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary. Run directly with
``python3 tests/test_acceptance.py`` for the summary alone.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from kalinv.engines import (
    Ensemble,
    HyperParams,
    averaged_landscape_1d,
    eki_step,
    fd_jacobian,
    initial_state,
    kalman_step,
    run,
    uki_step,
)
from kalinv.errors import UnstableStep
from kalinv.gaussian import GaussianState, symmetrize
from kalinv.problems.darcy import darcy2d
from kalinv.problems.linear import hilbert, linear2, logistic
from kalinv.problems.lorenz import lorenz63, lorenz96_multiscale
from kalinv.sampler import BayesianSpec, run_uks, rw_metropolis
from kalinv.theory import (
    LinearProblemSpec,
    algebraic_law_check,
    fd_gradient,
    kalman_iterates,
    phi_r,
    remark1_spec,
    solve_steady_covariance,
)

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    in_time = elapsed < budget
    line = (
        f"criterion {n:2d}: {'PASS' if ok and in_time else 'FAIL'}  {detail}  "
        f"[{elapsed:.1f}s / {budget:g}s{'' if in_time else ' OVER BUDGET'}]"
    )
    RESULTS[n] = line
    print(line)
    assert in_time, line
    assert ok, line


def _cov_history(method_step, state, n):
    states = [state]
    for _ in range(n):
        states.append(method_step(states[-1]))
    return states


# 1 ---------------------------------------------------------------------------


def test_criterion_01_uki_equals_kalman_filter():
    t0 = time.perf_counter()
    worst = 0.0
    for variant in ("NS", "OD", "UD"):
        prob = linear2(variant)
        hp = HyperParams.for_problem(prob, alpha=1.0)
        u = k = initial_state(prob, hp)
        for _ in range(50):
            u = uki_step(u, prob, hp)
            k = kalman_step(k, prob.matrix, prob.y_obs, hp)
            worst = max(worst, np.abs(u.mean - k.mean).max(), np.abs(u.cov - k.cov).max())
    report(1, worst < 1e-8, f"max |UKI - KF| over 50 iterations = {worst:.2e} (< 1e-8)", time.perf_counter() - t0, 1.0)


# 2 ---------------------------------------------------------------------------


def test_criterion_02_ns_od_recovery():
    t0 = time.perf_counter()
    ok, parts = True, []
    for variant in ("NS", "OD"):
        prob = linear2(variant)
        hp = HyperParams.for_problem(prob, alpha=1.0, gamma=0.25)
        res = run("uki", prob, hp, GaussianState(np.zeros(2), 0.25 * np.eye(2)), 30)
        err = res.column("param_error")
        hit = np.flatnonzero(err < 1e-6)
        first = int(hit[0]) + 1 if hit.size else None
        n = np.arange(1, err.size + 1)
        keep = err > 1e-12
        r = np.corrcoef(n[keep], np.log(err[keep]))[0, 1]
        slope = np.polyfit(n[keep], np.log(err[keep]), 1)[0]
        ok &= first is not None and first <= 30 and slope < 0 and r * r >= 0.99
        parts.append(f"{variant}: <1e-6 at n={first}, log-fit R^2={r * r:.4f} slope={slope:.2f}")
    report(2, ok, "; ".join(parts), time.perf_counter() - t0, 1.0)


# 3 ---------------------------------------------------------------------------


def test_criterion_03_ud_limits():
    t0 = time.perf_counter()
    prob = linear2("UD")
    hp = HyperParams.for_problem(prob, alpha=0.5)
    m_half = run("uki", prob, hp, initial_state(prob, hp), 200).final.mean
    ok_half = np.all(np.abs(m_half - [0.597, 1.195]) <= 0.01)

    hp1 = HyperParams.for_problem(prob, alpha=1.0)
    C0 = prob.gamma * np.eye(2)
    states = _cov_history(lambda s: uki_step(s, prob, hp1), GaussianState(np.zeros(2), C0), 200)
    m_one = states[-1].mean
    ok_one = np.all(np.abs(m_one - [0.6, 1.2]) <= 0.005)
    norms = np.array([np.linalg.norm(s.cov) for s in states])
    grows = bool(np.all(np.diff(norms[1:]) > 0) and norms[-1] > 10 * norms[1])
    margin = min(
        np.linalg.eigvalsh(symmetrize(C0 + n * hp1.sigma_omega - s.cov))[0] for n, s in enumerate(states)
    )
    ok = ok_half and ok_one and grows and margin >= -1e-10
    detail = (
        f"alpha=0.5 mean {np.round(m_half, 4)}; alpha=1 mean {np.round(m_one, 4)}, "
        f"|C_n|_F {norms[1]:.2f} -> {norms[-1]:.1f}, min bound margin {margin:.1e}"
    )
    report(3, ok, detail, time.perf_counter() - t0, 1.0)


# 4 ---------------------------------------------------------------------------


def _random_full_rank_spec(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = n + int(rng.integers(0, 3))
    G = rng.standard_normal((m, n))
    A = rng.standard_normal((m, m))
    B = rng.standard_normal((n, n))
    return LinearProblemSpec(
        G,
        rng.standard_normal(m),
        0.5 * (A @ A.T) / m + 0.1 * np.eye(m),
        0.5 * (B @ B.T) / n + 0.1 * np.eye(n),
        float(rng.uniform(0.3, 1.0)),
        rng.standard_normal(n),
    )


def test_criterion_04_oracle_agreement():
    t0 = time.perf_counter()
    specs = []
    for variant in ("NS", "OD"):
        prob = linear2(variant)
        specs.append((variant, LinearProblemSpec.from_problem(prob, HyperParams.for_problem(prob, alpha=0.5))))
    specs += [(f"rand{s}", _random_full_rank_spec(s)) for s in range(5)]
    worst_state, worst_grad = 0.0, 0.0
    for _, spec in specs:
        steady = solve_steady_covariance(spec)
        init = GaussianState(spec.r0, np.eye(spec.n_theta))
        last = kalman_iterates(spec, init, 500)[-1]
        worst_state = max(
            worst_state, np.linalg.norm(last.mean - steady.m_inf), np.linalg.norm(last.cov - steady.c_inf)
        )
        g = fd_gradient(lambda t: phi_r(spec, steady.c_hat_inf, t), steady.m_inf)
        worst_grad = max(worst_grad, np.linalg.norm(g))
    ok = worst_state < 1e-8 and worst_grad < 1e-6
    detail = f"7 specs: max |KF_500 - oracle| = {worst_state:.1e} (< 1e-8), max |grad Phi_R| = {worst_grad:.1e} (< 1e-6)"
    report(4, ok, detail, time.perf_counter() - t0, 5.0)


# 5 ---------------------------------------------------------------------------


def test_criterion_05_algebraic_law():
    t0 = time.perf_counter()
    prob = linear2("UD")
    law = algebraic_law_check(
        prob.matrix, 2.0 * prob.sigma_eta, prob.gamma * np.eye(2), np.zeros(2), prob.y_obs, 50
    )
    ok = law.max_cov_residual < 1e-10 and law.max_mean_residual < 1e-10
    detail = f"covariance residual {law.max_cov_residual:.1e}, mean residual {law.max_mean_residual:.1e} (< 1e-10)"
    report(5, ok, detail, time.perf_counter() - t0, 1.0)


# 6 ---------------------------------------------------------------------------


def test_criterion_06_closed_form_steady_state():
    t0 = time.perf_counter()
    prob = linear2("OD")
    worst = 0.0
    for alpha in (0.25, 0.5, 0.9, 1.0):
        spec, c_star = remark1_spec(prob.matrix, prob.sigma_eta, prob.y_obs, alpha)
        steady = solve_steady_covariance(spec)
        worst = max(worst, np.abs(steady.c_inf - c_star).max(), np.abs(steady.c_hat_inf - 2 * c_star).max())
    report(6, worst < 1e-8, f"max |C_inf - C*|, |C_hat_inf - 2C*| = {worst:.1e} (< 1e-8)", time.perf_counter() - t0, 1.0)


# 7 ---------------------------------------------------------------------------


def test_criterion_07_hilbert_contrast():
    t0 = time.perf_counter()
    prob = hilbert(10)
    hp = HyperParams.for_problem(prob, alpha=1.0, gamma=0.25)
    uki = run("uki", prob, hp, initial_state(prob, hp), 50).column("param_error")
    ens = Ensemble.sample(initial_state(prob, hp), 21, seed=0)
    eki = run("eki", prob, hp, ens, 50, rng=0).column("param_error")
    uki_ok = uki[49] < uki[4] and uki[49] < 0.1
    eki_ok = int(np.argmin(eki)) + 1 < 50 and eki[49] >= 10 * uki[49]
    detail = (
        f"UKI |m_n - 1|: n=5 {uki[4]:.3f}, n=50 {uki[49]:.3f} (< 0.1 required); "
        f"EKI J=21 min at n={int(np.argmin(eki)) + 1}, final {eki[49]:.3f} = {eki[49] / uki[49]:.1f}x UKI"
    )
    report(7, uki_ok and eki_ok, detail, time.perf_counter() - t0, 10.0)


# 8 ---------------------------------------------------------------------------


def test_criterion_08_eki_mean_field():
    t0 = time.perf_counter()
    prob = linear2("NS")
    hp = HyperParams.for_problem(prob, alpha=1.0)
    init = initial_state(prob, hp)
    u = uki_step(init, prob, hp)
    J = 100_000
    ens = eki_step(Ensemble.sample(init, J, seed=1), prob, hp, np.random.default_rng(2))
    se = np.sqrt(np.diag(ens.cov) / J)
    z = np.abs(ens.mean - u.mean) / se
    report(8, bool(np.all(z < 5)), f"|EKI mean - UKI mean| / SE = {np.round(z, 2)} (< 5)", time.perf_counter() - t0, 10.0)


# 9 ---------------------------------------------------------------------------


def test_criterion_09_darcy_desk_scale():
    t0 = time.perf_counter()
    prob = darcy2d(grid_n=32, n_modes_truth=64, n_theta=8, seed=0)
    hp = HyperParams.for_problem(prob, alpha=1.0)
    init = initial_state(prob, hp)
    res = run("uki", prob, hp, init, 30)
    e0 = prob.field_error(init.mean)
    e30 = res.history[-1].relative_field_error
    misfit = res.column("misfit")  # misfit[k] is iteration k + 1
    tail = misfit[2:]
    rises = np.diff(tail)
    worst_rise = float(max(0.0, rises.max()) / tail.max())
    mono = worst_rise <= 1e-12
    floor = prob.field_error(prob.metadata["theta_truth"][:8])
    decrease = 1 - e30 / e0
    detail = (
        f"field error {e0:.3f} -> {e30:.3f} ({100 * decrease:.0f}% drop, >= 50% required; "
        f"truncation floor {floor:.3f}); misfit non-increasing after n=3: {mono} "
        f"(largest relative rise {worst_rise:.1e})"
    )
    report(9, decrease >= 0.5 and mono, detail, time.perf_counter() - t0, 300.0)


# 10 --------------------------------------------------------------------------


def test_criterion_10_lorenz63_recovery():
    t0 = time.perf_counter()
    one = lorenz63("one_param", seed=0)
    hp1 = HyperParams.for_problem(one, alpha=1.0)
    r = run("uki", one, hp1, initial_state(one, hp1), 20).final.mean[0]
    three = lorenz63("three_param", seed=0)
    hp3 = HyperParams.for_problem(three, alpha=1.0)
    phys = three.metadata["constrained_to"](run("uki", three, hp3, initial_state(three, hp3), 20).final.mean)
    truth = np.array([10.0, 28.0, 8.0 / 3.0])
    rel = np.abs(phys - truth) / truth
    ok = abs(r - 28.0) < 0.5 and np.all(rel < 0.05)
    detail = f"r = {r:.3f}; (sigma, r, beta) = {np.round(phys, 3)}, max relative error {rel.max():.3f}"
    report(10, ok, detail, time.perf_counter() - t0, 120.0)


# 11 --------------------------------------------------------------------------


def test_criterion_11_averaged_landscape():
    t0 = time.perf_counter()
    grid = np.linspace(-3.0, 3.0, 13)
    sigma_r = np.sqrt(0.22)
    sq = averaged_landscape_1d(lambda x: x * x, grid, sigma_r, 16)
    sq_err = max(
        np.abs(sq.averaged - (grid**2 + sigma_r**2)).max(), np.abs(sq.averaged_gradient - 2 * grid).max()
    )
    prob = lorenz63("one_param", seed=0)
    r_grid = np.linspace(24.0, 28.0, 41)
    land = averaged_landscape_1d(lambda r: prob.forward(np.array([r]))[0], r_grid, sigma_r, 16)
    raw = np.array([fd_jacobian(prob.forward, np.array([r]))[0, 0] for r in r_grid])
    smooth = np.abs(land.averaged_gradient).max()
    ok = sq_err < 1e-8 and np.all(np.isfinite(land.averaged_gradient)) and smooth < 100 and np.abs(raw).max() > 1e3
    detail = f"x^2 error {sq_err:.1e}; Lorenz63 on [24, 28]: max |FdG| = {smooth:.2f}, max |raw dG| = {np.abs(raw).max():.0f}"
    report(11, ok, detail, time.perf_counter() - t0, 300.0)


# 12 --------------------------------------------------------------------------


def test_criterion_12_uks_linear():
    t0 = time.perf_counter()
    ok, parts = True, []
    for variant in ("NS", "OD", "UD"):
        spec = BayesianSpec.from_problem(linear2(variant), prior_cov=np.eye(2), r0=np.zeros(2))
        res = run_uks(spec, GaussianState(spec.r0, spec.prior_cov), 5e-5, 10.0)
        last = res.history[-1]
        ok &= last.mean_error < 1e-3 and last.cov_error < 1e-3 and res.n_steps == 200_000
        parts.append(f"{variant} mean {last.mean_error:.1e} cov {last.cov_error:.1e}")
    spec = BayesianSpec.from_problem(linear2("NS"))
    try:
        run_uks(spec, GaussianState(spec.r0, spec.prior_cov), 0.6, 1.2)
        raised = False
    except UnstableStep:
        raised = True
    parts.append(f"h=0.6 raises UnstableStep: {raised}")
    report(12, ok and raised, "; ".join(parts), time.perf_counter() - t0, 30.0)


# 13 --------------------------------------------------------------------------


def test_criterion_13_uks_logistic():
    t0 = time.perf_counter()
    spec = BayesianSpec.from_problem(logistic())
    uks = run_uks(spec, GaussianState(spec.r0, spec.prior_cov), 5e-5, 10.0).final
    mc = rw_metropolis(spec, 5_000_000, 1.0, 1_000_000, seed=0)
    d_mean = np.abs(uks.mean - mc.mean).max()
    d_cov = np.abs(uks.cov - mc.cov).max()
    d_paper = np.abs(mc.mean - [1.62, 1.31]).max()
    ok = d_mean < 0.25 and d_cov < 0.15 and d_paper < 0.05
    detail = (
        f"UKS mean {np.round(uks.mean, 3)}, MCMC mean {np.round(mc.mean, 3)}; "
        f"max gaps mean {d_mean:.3f} (< 0.25), cov {d_cov:.3f} (< 0.15), MCMC vs [1.62, 1.31] {d_paper:.3f} (< 0.05)"
    )
    report(13, ok, detail, time.perf_counter() - t0, 180.0)


# 14 --------------------------------------------------------------------------


def test_criterion_14_lorenz96_closure():
    t0 = time.perf_counter()
    prob = lorenz96_multiscale(seed=0, window=200.0)
    hp = HyperParams.for_problem(prob, alpha=1.0)
    res = run("uki", prob, hp, initial_state(prob, hp), 20)
    k = prob.metadata["n_observed"]
    g = prob.forward(res.final.mean)
    rel = np.abs(g[:k] - prob.y_ref[:k]) / np.abs(prob.y_ref[:k])
    detail = f"first moments of X1..X4 relative error {np.round(rel, 3)} (< 0.10)"
    report(14, bool(np.all(rel < 0.10)), detail, time.perf_counter() - t0, 600.0)


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failures = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failures += 1
    print(f"{len(tests) - failures}/{len(tests)} criteria passed")
    sys.exit(1 if failures else 0)
