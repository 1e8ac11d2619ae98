"""Command-line front end: ``kalinv run``, ``kalinv validate`` and ``kalinv landscape``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import (
    METHODS,
    PROBLEMS,
    RunConfig,
    build_problem,
    jsonable,
    parse_config,
    resolved_ensemble_size,
    resolved_gamma,
)
from .engines import (
    ConvergenceRecord,
    Ensemble,
    HyperParams,
    averaged_landscape_1d,
    fd_jacobian,
    initial_state,
    run,
)
from .errors import ConfigError, ForwardModelFailure, KalinvError, StepError
from .gaussian import GaussianState
from .problems.linear import linear2
from .sampler import BayesianSpec, run_uks
from .theory import (
    LinearProblemSpec,
    algebraic_law_check,
    divergence_bound_check,
    fd_gradient,
    kalman_iterates,
    minimize_phi_r,
    phi_r,
    remark1_spec,
    solve_steady_covariance,
    steady_state_residual,
)

log = logging.getLogger("kalinv")

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_FORWARD = 3
EXIT_STEP = 4
EXIT_NUMERICAL = 5
EXIT_IO = 6

HISTORY_COLUMNS = ("iteration", "misfit", "param_error", "field_error", "cov_frobenius")


def fmt(x) -> str:
    """17 significant digits; empty for undefined values."""
    if x is None:
        return ""
    x = float(x)
    if not np.isfinite(x):
        return "" if np.isnan(x) else repr(x)
    return format(x, ".17g")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ForwardModelFailure):
        return EXIT_FORWARD
    if isinstance(exc, StepError):
        return EXIT_STEP
    return EXIT_NUMERICAL


class HistoryWriter:
    """Appends one CSV row per completed iteration and flushes immediately."""

    def __init__(self, path: Path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(HISTORY_COLUMNS) + "\n")
        self._fh.flush()
        self.rows = 0

    def write(self, rec: ConvergenceRecord) -> None:
        row = (rec.iteration, rec.misfit, rec.param_error, rec.relative_field_error, rec.cov_frobenius)
        self._fh.write(",".join([str(row[0])] + [fmt(v) for v in row[1:]]) + "\n")
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


def _prepare_output(path: Path) -> None:
    if path.exists() and not path.is_dir():
        raise ConfigError("output_dir", f"{path} exists and is not a directory")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output_dir", f"cannot create {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError("output_dir", f"{path} is not writable")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")


def _uks_history(problem, result) -> list[ConvergenceRecord]:
    recs = []
    for rec in result.history[1:]:
        err = None
        if problem.theta_ref is not None:
            err = float(np.linalg.norm(rec.mean - problem.theta_ref))
        fe = None if problem.field_error is None else float(problem.field_error(rec.mean))
        recs.append(
            ConvergenceRecord(rec.step, rec.mean, float(np.linalg.norm(rec.cov)), problem.misfit(rec.mean), err, fe)
        )
    return recs


def execute(cfg: RunConfig) -> int:
    """Run one configuration; returns the process exit status."""
    out = Path(cfg.output_dir)
    _prepare_output(out)
    problem = build_problem(cfg)
    gamma_ = resolved_gamma(cfg, problem)
    hp = HyperParams.for_problem(problem, alpha=cfg.alpha, gamma=gamma_, spread_a=cfg.spread_a)

    files = ["manifest.json", "history.csv", "final_state.json"]
    manifest = {
        "kalinv_version": __version__,
        "config": cfg.to_dict(),
        "resolved": {
            "gamma": gamma_,
            "ensemble_size": resolved_ensemble_size(cfg, problem) if cfg.method == "eki" else None,
            "spread_a": hp.spread(problem.n_theta),
            "r0": problem.r0,
            "sigma_omega": hp.sigma_omega,
            "sigma_nu": hp.sigma_nu,
            "n_theta": problem.n_theta,
            "n_y": problem.n_y,
        },
        "files": files,
        "status": "running",
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "duration_seconds": None,
    }
    _write_json(out / "manifest.json", manifest)
    writer = HistoryWriter(out / "history.csv")
    t0 = time.perf_counter()
    status, code, final = "completed", EXIT_OK, None
    try:
        if cfg.method == "uks":
            spec = BayesianSpec.from_problem(problem, prior_cov=gamma_ * np.eye(problem.n_theta))
            result = run_uks(spec, GaussianState(spec.r0, spec.prior_cov), cfg.uks_h, cfg.uks_t_end, a=cfg.spread_a)
            for rec in _uks_history(problem, result):
                writer.write(rec)
            final = {"mean": result.final.mean, "cov": result.final.cov}
        else:
            if cfg.method == "eki":
                init = Ensemble.sample(
                    initial_state(problem, hp), resolved_ensemble_size(cfg, problem), seed=cfg.seed
                )
            else:
                init = initial_state(problem, hp)
            jac = None
            if cfg.method == "exki" and cfg.fd_jacobian and problem.jacobian is None:
                jac = lambda th: fd_jacobian(problem.forward, th)  # noqa: E731
            res = run(cfg.method, problem, hp, init, cfg.n_iters, rng=cfg.seed, jacobian=jac, callback=writer.write)
            state = res.final
            if isinstance(state, Ensemble):
                final = {"mean": state.mean, "cov": state.cov, "particles": state.particles}
            else:
                final = {"mean": state.mean, "cov": state.cov}
            manifest["forward_evaluations"] = res.forward_evaluations
    except KalinvError as exc:
        status, code = f"failed: {type(exc).__name__}: {exc}", _exit_code(exc)
        print(f"kalinv: {type(exc).__name__}: {exc}", file=sys.stderr)
        final = {"mean": None, "cov": None, "error": str(exc)}
    finally:
        writer.close()
        if final is None:
            final = {"mean": None, "cov": None, "error": "interrupted"}
            status = "failed: interrupted"
        _write_json(out / "final_state.json", final)
        manifest["status"] = status
        manifest["completed_iterations"] = writer.rows
        manifest["duration_seconds"] = time.perf_counter() - t0
        _write_json(out / "manifest.json", manifest)
    return code


# --- theory validation ---------------------------------------------------------

VALIDATE_SPECS = ("ns", "od", "ud", "ud-alpha1")
ORACLE_TOL = 1e-8
GRADIENT_TOL = 1e-6
LAW_TOL = 1e-10
MARGIN_TOL = -1e-10


def _check(report: dict, name: str, value: float, tol: float, upper: bool = True) -> None:
    ok = bool(value < tol) if upper else bool(value >= tol)
    report["checks"][name] = {"value": float(value), "tolerance": tol, "pass": ok}


def validate_theory(selector: str, alpha: float = 0.5, n_max: int = 200) -> dict:
    """Run the linear-theory oracles on one built-in system and collect residuals."""
    if selector not in VALIDATE_SPECS:
        raise ConfigError("spec", f"unknown spec {selector!r}; choose from {list(VALIDATE_SPECS)}")
    variant = selector.split("-")[0].upper()
    problem = linear2(variant)
    report: dict = {"spec": selector, "checks": {}}
    if selector == "ud-alpha1":
        gamma_ = problem.gamma
        sigma_nu = 2.0 * problem.sigma_eta
        C0 = gamma_ * np.eye(2)
        law = algebraic_law_check(problem.matrix, sigma_nu, C0, np.zeros(2), problem.y_obs, 50)
        _check(report, "algebraic_law_cov_residual", law.max_cov_residual, LAW_TOL)
        _check(report, "algebraic_law_mean_residual", law.max_mean_residual, LAW_TOL)
        hp = HyperParams.for_problem(problem, alpha=1.0)
        spec = LinearProblemSpec.from_problem(problem, hp)
        div = divergence_bound_check(spec, n_max, C0=C0, m0=np.zeros(2))
        _check(report, "divergence_bound_margin", div.min_margin, MARGIN_TOL, upper=False)
        report["alpha"] = 1.0
        report["final_mean"] = div.means[-1]
        report["final_cov_frobenius"] = float(div.cov_norms[-1])
    else:
        hp = HyperParams.for_problem(problem, alpha=alpha)
        spec = LinearProblemSpec.from_problem(problem, hp)
        steady = solve_steady_covariance(spec, gamma=problem.gamma)
        states = kalman_iterates(spec, initial_state(problem, hp), 500)
        last = states[-1]
        _check(report, "steady_state_residual", steady_state_residual(spec, steady.c_inf), ORACLE_TOL)
        _check(report, "kf_mean_vs_oracle", float(np.linalg.norm(last.mean - steady.m_inf)), ORACLE_TOL)
        _check(report, "kf_cov_vs_oracle", float(np.linalg.norm(last.cov - steady.c_inf)), ORACLE_TOL)
        grad = fd_gradient(lambda t: phi_r(spec, steady.c_hat_inf, t), steady.m_inf)
        _check(report, "phi_r_gradient_norm", float(np.linalg.norm(grad)), GRADIENT_TOL)
        if selector == "od":
            rspec, c_star = remark1_spec(problem.matrix, problem.sigma_eta, problem.y_obs, alpha)
            rs = solve_steady_covariance(rspec)
            _check(report, "closed_form_c_inf", float(np.linalg.norm(rs.c_inf - c_star)), ORACLE_TOL)
            _check(report, "closed_form_c_hat_inf", float(np.linalg.norm(rs.c_hat_inf - 2 * c_star)), ORACLE_TOL)
        report["alpha"] = alpha
        report["m_inf"] = steady.m_inf
        report["c_inf"] = steady.c_inf
        report["phi_r_minimizer"] = minimize_phi_r(spec, steady.c_hat_inf)
    report["pass"] = all(c["pass"] for c in report["checks"].values())
    return report


# --- landscape -----------------------------------------------------------------


def landscape_rows(problem_name: str, r_min: float, r_max: float, sigma_r: float, n_points: int, quad_order: int):
    if problem_name not in PROBLEMS:
        raise ConfigError("problem", f"unknown problem {problem_name!r}")
    problem = PROBLEMS[problem_name][0]()
    if problem.n_theta != 1:
        raise ConfigError("problem", "the landscape probe needs a single-parameter problem")
    if not r_max > r_min:
        raise ConfigError("r_max", "r_max must exceed r_min")
    if n_points < 2:
        raise ConfigError("n_points", "n_points must be at least 2")
    grid = np.linspace(r_min, r_max, n_points)

    def g(r):
        return problem.forward(np.array([r]))[0]

    land = averaged_landscape_1d(g, grid, sigma_r, quad_order)
    raw_value = np.array([g(r) for r in grid])
    raw_grad = np.array([fd_jacobian(problem.forward, np.array([r]))[0, 0] for r in grid])
    return zip(grid, raw_value, raw_grad, land.averaged, land.averaged_gradient)


# --- argument parsing ---------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha")
    p.add_argument("--gamma")
    p.add_argument("--iters", "--n-iters", dest="n_iters")
    p.add_argument("--ensemble-size", dest="ensemble_size")
    p.add_argument("--noise-level", dest="noise_level")
    p.add_argument("--seed")
    p.add_argument("--spread-a", dest="spread_a")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--fd-jacobian", dest="fd_jacobian", action="store_const", const=True, default=None)
    p.add_argument("--h", dest="uks_h", help="UKS time step")
    p.add_argument("--t-end", dest="uks_t_end", help="UKS end time")
    p.add_argument(
        "--param", action="append", default=[], metavar="KEY=VALUE", help="problem parameter (repeatable)"
    )


def _parse_params(items: list[str]) -> dict:
    params = {}
    for item in items:
        if "=" not in item:
            raise ConfigError("param", f"expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = yaml.safe_load(value)
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kalinv", description="Iterated Kalman inversion experiments")
    parser.add_argument("--version", action="version", version=f"kalinv {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("run", help="run one inversion and write its history"))

    v = sub.add_parser("validate", help="check the linear convergence theory on a built-in system")
    v.add_argument("--spec", required=True, choices=VALIDATE_SPECS)
    v.add_argument("--alpha", type=float, default=0.5, help="regularization for ns/od/ud (default 0.5)")
    v.add_argument("--out", default="theory_report.json")

    land = sub.add_parser("landscape", help="Gaussian-averaged value and gradient of a scalar forward map")
    land.add_argument("--problem", default="lorenz63:one_param")
    land.add_argument("--r-min", type=float, default=20.0)
    land.add_argument("--r-max", type=float, default=30.0)
    land.add_argument("--sigma-r", type=float, default=0.469)
    land.add_argument("--n-points", type=int, default=101)
    land.add_argument("--quad-order", type=int, default=16)
    land.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "run":
            overrides = {
                k: getattr(args, k)
                for k in (
                    "problem", "method", "alpha", "gamma", "n_iters", "ensemble_size", "noise_level",
                    "seed", "spread_a", "output_dir", "fd_jacobian", "uks_h", "uks_t_end",
                )
            }
            overrides["problem_params"] = _parse_params(args.param)
            cfg = parse_config(args.config, overrides)
            return execute(cfg)
        if args.command == "validate":
            report = validate_theory(args.spec, alpha=args.alpha)
            _write_json(Path(args.out), report)
            for name, c in report["checks"].items():
                print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.3e} (tol {c['tolerance']:g})")
            return EXIT_OK if report["pass"] else EXIT_FAILED_CHECK
        if args.command == "landscape":
            rows = landscape_rows(args.problem, args.r_min, args.r_max, args.sigma_r, args.n_points, args.quad_order)
            with open(args.out, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["r", "value", "fd_gradient", "averaged_value", "averaged_gradient"])
                for row in rows:
                    w.writerow([fmt(v) for v in row])
            return EXIT_OK
    except ConfigError as exc:
        print(f"kalinv: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KalinvError as exc:
        print(f"kalinv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"kalinv: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
