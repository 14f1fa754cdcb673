from dataclasses import dataclass, field, fields
from enum import Enum
from typing import List, Optional

import yaml

from .errors import ConfigError


class SolverMode(str, Enum):
    BUNDLE = "bundle"
    PROX = "prox"


class TrialMode(str, Enum):
    DIRECT = "direct"
    BACKTRACK = "backtrack"
    STRONG_NU = "strong_nu"


class QPolicy(str, Enum):
    ZERO = "zero"
    SCALED_IDENTITY = "scaled_identity"
    FIXED = "fixed"


ORACLE_KINDS = ("downshift", "double_downshift", "standard", "natural", "standard_or_double_downshift")


@dataclass
class SolverConfig:
    mode: str = "bundle"  # bundle | prox
    gamma: float = 0.1
    gamma_tilde: float = 0.5
    Gamma: float = 0.6
    theta: float = 0.1
    Theta: float = 2.0
    q_bound: float = 1e3
    c_downshift: float = 0.1
    R_initial: float = 1.0
    eps_stop: float = 1e-8
    max_outer: int = 10000
    max_inner: int = 500
    oracle_kind: str = "downshift"
    all_active_pieces: bool = False
    trial_mode: str = "direct"  # direct | backtrack | strong_nu
    backtrack_alpha: float = 0.5
    nu0: Optional[float] = None  # None -> R_initial
    nu_decay: float = 0.5
    fallback_enabled: Optional[bool] = None  # None -> on when Q > 0 and trial_mode != direct
    Q_policy: str = "scaled_identity"  # zero | scaled_identity | fixed
    Q_delta: float = 0.5
    Q_matrix: Optional[List[List[float]]] = None
    max_planes: Optional[int] = None  # None -> max(n + 2, 10)
    keep_newest: int = 1
    recycle_enabled: bool = True
    prox_r: Optional[float] = None

    def validate(self) -> "SolverConfig":
        checks = [
            (self.gamma > 0, "gamma > 0"),
            (self.gamma < self.gamma_tilde, "gamma < gamma_tilde"),
            (self.gamma_tilde < 1, "gamma_tilde < 1"),
            (self.gamma < self.Gamma, "gamma < Gamma"),
            (self.Gamma <= 1, "Gamma ≤ 1"),
            (self.theta > 0, "theta > 0"),
            (self.theta <= 1, "theta ≤ 1"),
            (self.Theta >= 1, "Theta ≥ 1"),
            (self.q_bound > 0, "q_bound > 0"),
            (self.c_downshift > 0, "c_downshift > 0"),
            (self.R_initial > 0, "R_initial > 0"),
            (self.eps_stop > 0, "eps_stop > 0"),
            (self.max_outer >= 1, "max_outer ≥ 1"),
            (self.max_inner >= 1, "max_inner ≥ 1"),
            (self.max_planes is None or self.max_planes >= 3, "max_planes ≥ 3"),
            (self.keep_newest >= 1, "keep_newest ≥ 1"),
            (self.theta <= self.backtrack_alpha <= 1, "theta ≤ backtrack_alpha ≤ 1"),
            (0 < self.nu_decay < 1, "0 < nu_decay < 1"),
            (self.nu0 is None or self.nu0 >= 0, "nu0 ≥ 0"),
            (self.Q_delta >= 0, "Q_delta ≥ 0"),
            (self.prox_r is None or self.prox_r > 0, "prox_r > 0"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ConfigError(f"solver config violates {rule}")
        for value, enum, key in (
            (self.mode, SolverMode, "mode"),
            (self.trial_mode, TrialMode, "trial_mode"),
            (self.Q_policy, QPolicy, "Q_policy"),
        ):
            allowed = [e.value for e in enum]
            if value not in allowed:
                raise ConfigError(f"solver.{key} must be one of {allowed}, got '{value}'")
        if self.oracle_kind not in ORACLE_KINDS:
            raise ConfigError(f"solver.oracle_kind must be one of {list(ORACLE_KINDS)}, got '{self.oracle_kind}'")
        if self.Q_policy == QPolicy.FIXED.value and self.Q_matrix is None:
            raise ConfigError("solver.Q_policy 'fixed' needs solver.Q_matrix")
        return self


@dataclass
class OutputConfig:
    trace: str = ""
    summary: str = ""


@dataclass
class LoggingConfig:
    level: str = "INFO"


@dataclass
class RunConfig:
    problem: str = ""
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    seed: int = 0


def _section(cls, data, name: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section '{name}': {', '.join(map(str, unknown))}")
    return cls(**data)


def _dict_to_dataclass(d: dict) -> RunConfig:
    top = {"problem", "solver", "output", "logging", "seed"}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(map(str, unknown))}")
    solver = _section(SolverConfig, d.get("solver"), "solver").validate()
    return RunConfig(
        problem=str(d.get("problem") or ""),
        solver=solver,
        output=_section(OutputConfig, d.get("output"), "output"),
        logging=_section(LoggingConfig, d.get("logging"), "logging"),
        seed=int(d.get("seed") or 0),
    )


def load_config(path: str = "config.yaml") -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config '{path}': {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config '{path}' is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config '{path}' must hold a mapping")
    return _dict_to_dataclass(data)


def parse_config(path: str) -> SolverConfig:
    return load_config(path).solver
