"""TOML scenario configuration.

Example::

    [kernel]
    alpha = 1.0
    beta = 0.5
    nu = 0.5

    [system]
    modes = 8

    [problem]
    zeta = "single_mode(1)"
    zeta1 = "decaying(1, 1)"

State vectors are either explicit coefficient lists or one of the presets
``single_mode(m)`` (unit vector on mode ``m``) and ``decaying(c, rate)``
(coefficients ``c / m**rate``).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigParseError, ConfigValidationError

DEFAULT_LAMBDAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class KernelConfig:
    alpha: float = 1.0
    beta: float = 0.5
    nu: float = 0.5


@dataclass(frozen=True)
class SystemConfig:
    modes: int = 8
    grid_points: int = 513
    p: float = 2.0


@dataclass(frozen=True)
class TimeConfig:
    T: float = 1.0
    steps: int = 257
    grid_kind: str = "Uniform"


@dataclass(frozen=True)
class ControlConfig:
    operator_kind: str = "Identity"
    lambda_sequence: tuple = DEFAULT_LAMBDAS
    killed_modes: tuple = ()


@dataclass(frozen=True)
class ProblemConfig:
    zeta_spec: object = "single_mode(1)"
    zeta1_spec: object = "decaying(1, 1)"


@dataclass(frozen=True)
class NonlinearityConfig:
    kind: str = "Zero"
    k0: float = 0.1
    mu: float = 0.05


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class ScenarioConfig:
    kernel: KernelConfig = field(default_factory=KernelConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    def zeta(self) -> np.ndarray:
        return state_vector(self.problem.zeta_spec, self.system.modes, "problem.zeta")

    def zeta1(self) -> np.ndarray:
        return state_vector(self.problem.zeta1_spec, self.system.modes, "problem.zeta1")


_SECTIONS = {
    "kernel": (KernelConfig, {"alpha": "alpha", "beta": "beta", "nu": "nu"}),
    "system": (SystemConfig, {"modes": "modes", "grid_points": "grid_points", "p": "p"}),
    "time": (TimeConfig, {"T": "T", "steps": "steps", "grid_kind": "grid_kind"}),
    "control": (
        ControlConfig,
        {"operator_kind": "operator_kind", "lambda_sequence": "lambda_sequence", "killed_modes": "killed_modes"},
    ),
    "problem": (ProblemConfig, {"zeta": "zeta_spec", "zeta1": "zeta1_spec"}),
    "nonlinearity": (NonlinearityConfig, {"kind": "kind", "k0": "k0", "mu": "mu"}),
    "outputs": (OutputConfig, {"directory": "directory", "formats": "formats"}),
}

_PRESET = re.compile(r"^\s*(single_mode|decaying)\s*\(([^)]*)\)\s*$")


def state_vector(spec, modes: int, key: str = "state") -> np.ndarray:
    """Coefficient vector from a list or a preset string."""
    if isinstance(spec, str):
        m = _PRESET.match(spec)
        if not m:
            raise ConfigValidationError(f"{key}: unknown preset {spec!r}; use single_mode(m) or decaying(c, rate)")
        name, raw = m.groups()
        try:
            args = [float(a) for a in raw.split(",") if a.strip()]
        except ValueError:
            raise ConfigValidationError(f"{key}: preset arguments must be numbers") from None
        if name == "single_mode":
            if len(args) != 1 or args[0] != int(args[0]) or not 1 <= args[0] <= modes:
                raise ConfigValidationError(f"{key}: single_mode(m) needs an integer 1 <= m <= {modes}")
            v = np.zeros(modes)
            v[int(args[0]) - 1] = 1.0
            return v
        if len(args) != 2:
            raise ConfigValidationError(f"{key}: decaying(c, rate) takes two numbers")
        c, rate = args
        return c / np.arange(1, modes + 1, dtype=float) ** rate
    try:
        v = np.array(spec, dtype=float)
    except (TypeError, ValueError):
        raise ConfigValidationError(f"{key}: expected a list of numbers or a preset") from None
    if v.shape != (modes,):
        raise ConfigValidationError(f"{key}: expected {modes} coefficients, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ConfigValidationError(f"{key}: coefficients must be finite")
    return v


def _require(cond: bool, key: str, constraint: str):
    if not cond:
        raise ConfigValidationError(f"{key}: {constraint}")


def _number(value, key: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), key, "must be a number")
    _require(math.isfinite(value), key, "must be finite")
    return float(value)


def _integer(value, key: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
    return int(value)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    k, s, t, c, n, o = cfg.kernel, cfg.system, cfg.time, cfg.control, cfg.nonlinearity, cfg.outputs
    _require(_number(k.alpha, "kernel.alpha") > 0, "kernel.alpha", "alpha must be positive")
    _require(_number(k.beta, "kernel.beta") >= 0, "kernel.beta", "beta must be nonnegative")
    _require(0 < _number(k.nu, "kernel.nu") < 1, "kernel.nu", "nu must lie in (0,1)")
    _require(1 <= _integer(s.modes, "system.modes") <= 32, "system.modes", "modes must lie in [1, 32]")
    _require(_integer(s.grid_points, "system.grid_points") >= 2, "system.grid_points", "grid_points must be >= 2")
    _require(_number(s.p, "system.p") >= 2, "system.p", "p must be >= 2")
    _require(_number(t.T, "time.T") > 0, "time.T", "T must be positive")
    _require(_integer(t.steps, "time.steps") >= 2, "time.steps", "steps must be >= 2")
    _require(t.grid_kind == "Uniform", "time.grid_kind", "only 'Uniform' grids are supported by the experiments")
    _require(
        c.operator_kind in ("Identity", "PaperKernel", "GreensDiagonal"),
        "control.operator_kind",
        "must be one of Identity, PaperKernel, GreensDiagonal",
    )
    lams = [_number(x, "control.lambda_sequence") for x in c.lambda_sequence]
    _require(len(lams) >= 1, "control.lambda_sequence", "must not be empty")
    _require(all(x > 0 for x in lams), "control.lambda_sequence", "entries must be positive")
    _require(all(b < a for a, b in zip(lams, lams[1:])), "control.lambda_sequence", "must be strictly decreasing")
    for m in c.killed_modes:
        _require(1 <= _integer(m, "control.killed_modes") <= s.modes, "control.killed_modes", "modes must lie in [1, modes]")
    _require(len(c.killed_modes) < s.modes, "control.killed_modes", "at least one mode must stay controlled")
    _require(n.kind in ("Zero", "SineCosine", "ExpDecayLinear"), "nonlinearity.kind", "must be Zero, SineCosine or ExpDecayLinear")
    _require(_number(n.k0, "nonlinearity.k0") > 0, "nonlinearity.k0", "k0 must be positive")
    _require(_number(n.mu, "nonlinearity.mu") > 0, "nonlinearity.mu", "mu must be positive")
    _require(isinstance(o.directory, str) and o.directory != "", "outputs.directory", "must be a nonempty string")
    _require(len(o.formats) > 0 and set(o.formats) <= {"csv", "json"}, "outputs.formats", "entries must be 'csv' or 'json'")
    cfg.zeta()
    cfg.zeta1()
    return cfg


def config_from_mapping(data: dict) -> ScenarioConfig:
    parts = {}
    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigValidationError(f"{section}: unknown key")
        if not isinstance(body, dict):
            raise ConfigValidationError(f"{section}: must be a table")
        cls, names = _SECTIONS[section]
        kwargs = {}
        for key, value in body.items():
            if key not in names:
                raise ConfigValidationError(f"{section}.{key}: unknown key")
            if isinstance(value, list) and names[key] not in ("zeta_spec", "zeta1_spec"):
                value = tuple(value)
            kwargs[names[key]] = value
        parts[section] = cls(**kwargs)
    return validate(ScenarioConfig(**parts))


def parse_config(path) -> ScenarioConfig:
    """Read, validate and default-fill a TOML scenario file."""
    text = Path(path).read_text()
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    return config_from_mapping(data)
