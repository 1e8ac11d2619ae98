"""Run configuration: YAML file plus flat flag overrides, validated up front."""

from __future__ import annotations

import inspect
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .problems.base import InverseProblem, add_noise
from .problems.darcy import darcy2d
from .problems.linear import hilbert, linear2, logistic
from .problems.lorenz import lorenz63, lorenz96_multiscale

METHODS = ("uki", "eki", "exki", "kf", "uks")


def _linear2(variant):
    return lambda **kw: linear2(variant, **kw)


def _lorenz63(variant):
    return lambda **kw: lorenz63(variant, **kw)


# name -> (builder, accepted keyword parameters)
PROBLEMS: dict[str, tuple[Callable[..., InverseProblem], tuple[str, ...]]] = {
    "linear2:NS": (_linear2("NS"), ()),
    "linear2:OD": (_linear2("OD"), ()),
    "linear2:UD": (_linear2("UD"), ()),
    "hilbert": (hilbert, ("n_theta",)),
    "darcy": (darcy2d, ("grid_n", "n_modes_truth", "n_theta", "seed", "noise_level")),
    "lorenz63:one_param": (_lorenz63("one_param"), ("seed", "dt", "spin_up", "window", "n_truth_windows")),
    "lorenz63:three_param": (_lorenz63("three_param"), ("seed", "dt", "spin_up", "window", "n_truth_windows")),
    "lorenz96": (
        lorenz96_multiscale,
        tuple(p for p in inspect.signature(lorenz96_multiscale).parameters),
    ),
    "logistic": (logistic, ("x", "y", "sigma")),
}


@dataclass
class RunConfig:
    problem: str
    method: str = "uki"
    alpha: float = 1.0
    gamma: Optional[float] = None  # None: the problem's default
    n_iters: int = 20
    ensemble_size: Optional[int] = None  # EKI only; None: the problem's default
    noise_level: float = 0.0
    seed: int = 0
    spread_a: Optional[float] = None
    output_dir: str = "kalinv_run"
    fd_jacobian: bool = False
    uks_h: float = 5e-5
    uks_t_end: float = 10.0
    problem_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.method not in METHODS:
            raise ConfigError("method", f"unknown method {self.method!r}; choose from {list(METHODS)}")
        if not (isinstance(self.alpha, (int, float)) and 0.0 < self.alpha <= 1.0):
            raise ConfigError("alpha", "alpha must lie in (0,1]")
        if self.gamma is not None and not self.gamma > 0.0:
            raise ConfigError("gamma", "gamma must be positive")
        if not (isinstance(self.n_iters, int) and self.n_iters >= 1):
            raise ConfigError("n_iters", "n_iters must be a positive integer")
        if self.ensemble_size is not None and not (
            isinstance(self.ensemble_size, int) and self.ensemble_size >= 2
        ):
            raise ConfigError("ensemble_size", "ensemble_size must be an integer of at least 2")
        if not (math.isfinite(self.noise_level) and self.noise_level >= 0.0):
            raise ConfigError("noise_level", "noise_level must be a non-negative number")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ConfigError("seed", "seed must be an unsigned integer")
        if self.spread_a is not None and not self.spread_a > 0.0:
            raise ConfigError("spread_a", "spread_a must be positive")
        if not self.uks_h > 0.0:
            raise ConfigError("uks_h", "uks_h must be positive")
        if not self.uks_t_end > 0.0:
            raise ConfigError("uks_t_end", "uks_t_end must be positive")
        if not isinstance(self.problem_params, dict):
            raise ConfigError("problem_params", "problem_params must be a mapping")
        allowed = PROBLEMS[self.problem][1]
        for key in self.problem_params:
            if key in ("seed", "noise_level"):
                raise ConfigError(f"problem_params.{key}", f"set {key} at the top level")
            if key not in allowed:
                raise ConfigError(
                    f"problem_params.{key}", f"not a parameter of {self.problem} (accepted: {list(allowed)})"
                )

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(RunConfig)}
_ALIASES = {"iters": "n_iters", "h": "uks_h", "t_end": "uks_t_end"}


def _normalize(raw: dict, origin: str) -> dict:
    out = {}
    for key, value in raw.items():
        name = _ALIASES.get(str(key).replace("-", "_"), str(key).replace("-", "_"))
        if name == "problem" and isinstance(value, dict):
            value = dict(value)
            if "name" not in value:
                raise ConfigError("problem.name", "a problem mapping needs a name")
            out["problem"] = value.pop("name")
            out.setdefault("problem_params", {}).update(value)
            continue
        if name not in _FIELDS:
            raise ConfigError(name, f"unknown field in {origin}")
        if name == "problem_params":
            out.setdefault("problem_params", {}).update(value or {})
        else:
            out[name] = value
    return out


def _coerce(name: str, value: Any) -> Any:
    """Make flag strings and YAML scalars match the field types."""
    if value is None:
        return None
    try:
        if name in ("alpha", "gamma", "noise_level", "spread_a", "uks_h", "uks_t_end"):
            return float(value)
        if name in ("n_iters", "ensemble_size", "seed"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if name == "fd_jacobian":
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                return value.lower() in ("true", "1", "yes")
            return bool(value)
        if name in ("problem", "method", "output_dir"):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot interpret {value!r}") from None
    return value


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (YAML) and apply ``overrides``; flags win over file values."""
    merged: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a mapping")
        merged = _normalize(raw, "config file")
    if overrides:
        flags = _normalize({k: v for k, v in overrides.items() if v is not None}, "flags")
        params = flags.pop("problem_params", {})
        merged.update(flags)
        merged.setdefault("problem_params", {}).update(params)
    if "problem" not in merged:
        raise ConfigError("problem", "a problem name is required")
    kwargs = {k: (v if k == "problem_params" else _coerce(k, v)) for k, v in merged.items()}
    return RunConfig(**kwargs)


def build_problem(cfg: RunConfig) -> InverseProblem:
    builder, accepted = PROBLEMS[cfg.problem]
    kwargs = dict(cfg.problem_params)
    if "seed" in accepted:
        kwargs["seed"] = cfg.seed
    if "noise_level" in accepted:
        kwargs["noise_level"] = cfg.noise_level
    try:
        problem = builder(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("problem_params", str(exc)) from None
    if cfg.noise_level > 0 and "noise_level" not in accepted:
        ref = problem.y_ref if problem.y_ref is not None else problem.y_obs
        problem.y_obs = add_noise(ref, cfg.noise_level, cfg.seed + 1)
    return problem


def resolved_gamma(cfg: RunConfig, problem: InverseProblem) -> float:
    return problem.gamma if cfg.gamma is None else cfg.gamma


def resolved_ensemble_size(cfg: RunConfig, problem: InverseProblem) -> int:
    if cfg.ensemble_size is not None:
        return cfg.ensemble_size
    return problem.ensemble_size or 2 * problem.n_theta + 1


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
