"""Strict JSON run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .continuation import StepControl
from .mesh import ConfigError, Frame, Grid, ProblemParams, WeightPair, build_grid, sample_weights
from .system import Problem

DEFAULT_EPS_SEQUENCE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


@dataclass(frozen=True)
class GridConfig:
    n: int = 513
    x_lo: float = 0.0
    x_hi: float = 1.0


@dataclass(frozen=True)
class ParamsConfig:
    p: float = 3.0
    q: float = 1.5
    shift_M: float = 1.0
    frame: str = "Q"


@dataclass(frozen=True)
class ContinuationConfig:
    rho: float | None = None          # None: 4 * c*_0
    Lambda: float | None = None       # None: 2 * mu_bar from the cap scan
    lambda_probe: float = 10.0
    eps_sequence: tuple[float, ...] = DEFAULT_EPS_SEQUENCE
    eps: float = 1e-2                 # single-trace default
    s0: float = 1e-3
    ds0: float = 1e-2
    ds_min: float = 1e-6
    ds_max: float = 5e-2
    newton_tol: float = 1e-10
    corrector_max_iter: int = 12
    max_steps: int = 20000
    trivial_tol: float = 1e-8
    const_tol: float = 1e-6
    param_tol: float = 1e-6
    sol_sep_tol: float = 1e-6
    origin_tol_rel: float = 0.05
    limsup_tol: float = 0.1
    n_starts: int = 20

    def step_control(self) -> StepControl:
        names = {f.name for f in fields(StepControl)}
        return StepControl(**{k: getattr(self, k) for k in names if hasattr(self, k)})


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    weights: dict = field(default_factory=dict)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    seed: int = 42
    name: str = ""

    def build_grid(self) -> Grid:
        return build_grid(self.grid.n, self.grid.x_lo, self.grid.x_hi)

    def build_weights(self, g: Grid | None = None) -> WeightPair:
        return sample_weights(self.weights, g or self.build_grid())

    def problem_params(self, eps: float = 0.0, frame: Frame | str | None = None) -> ProblemParams:
        pr = self.params
        return ProblemParams(pr.p, pr.q, eps=eps, shift_M=pr.shift_M, frame=Frame(frame or pr.frame))

    def problem(self, eps: float = 0.0, frame: Frame | str | None = None) -> Problem:
        g = self.build_grid()
        return Problem(g, self.build_weights(g), self.problem_params(eps, frame))


def _section(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
    kw = dict(data)
    if "eps_sequence" in kw:
        kw["eps_sequence"] = tuple(float(e) for e in kw["eps_sequence"])
    return cls(**kw)


_WEIGHT_KEYS = {
    "cosine_shift": {"kind", "amplitude", "offset"},
    "constant": {"kind", "value"},
    "piecewise_constant": {"kind", "breakpoints", "values"},
    "table": {"kind", "samples"},
}


def _check_weights(data: Any) -> dict:
    if not isinstance(data, dict) or set(data) != {"a", "b"}:
        raise ConfigError("weights: expected exactly the keys 'a' and 'b'")
    for name, spec in data.items():
        if not isinstance(spec, dict) or spec.get("kind") not in _WEIGHT_KEYS:
            raise ConfigError(f"weights.{name}: unknown or missing kind")
        extra = set(spec) - _WEIGHT_KEYS[spec["kind"]]
        if extra:
            raise ConfigError(f"weights.{name}: unknown key {sorted(extra)[0]!r}")
    return data


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig; unknown keys anywhere are errors."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected an object")
    top = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in top:
            raise ConfigError(f"config: unknown key {key!r}")
    if "weights" not in data:
        raise ConfigError("config: missing 'weights'")
    try:
        cfg = RunConfig(
            grid=_section(GridConfig, data.get("grid", {}), "grid"),
            weights=_check_weights(data["weights"]),
            params=_section(ParamsConfig, data.get("params", {}), "params"),
            continuation=_section(ContinuationConfig, data.get("continuation", {}), "continuation"),
            seed=int(data.get("seed", 42)),
            name=str(data.get("name", "")),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    g = cfg.build_grid()
    cfg.build_weights(g)
    cfg.problem_params()
    c = cfg.continuation
    seq = c.eps_sequence
    if not seq:
        raise ConfigError("continuation.eps_sequence must not be empty")
    if any(not 0 < e <= 1 for e in seq) or any(x <= y for x, y in zip(seq, seq[1:])):
        raise ConfigError("continuation.eps_sequence must be strictly decreasing within (0, 1]")
    if not 0 < c.eps <= 1:
        raise ConfigError("continuation.eps must lie in (0, 1]")
    if not 0 < c.ds_min <= c.ds0 <= c.ds_max:
        raise ConfigError("need 0 < ds_min <= ds0 <= ds_max")
    for key in ("newton_tol", "trivial_tol", "const_tol", "param_tol", "sol_sep_tol", "s0", "lambda_probe"):
        if not getattr(c, key) > 0:
            raise ConfigError(f"continuation.{key} must be positive")
    if c.rho is not None and not c.rho > 0:
        raise ConfigError("continuation.rho must be positive")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def bundled_config(name: str) -> RunConfig:
    """One of the configs shipped with the package ("main_case", "prehypo")."""
    return load_config(Path(__file__).parent / "configs" / f"{name}.json")
