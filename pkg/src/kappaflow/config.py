"""Run configuration: one JSON document, strict schema, echoed into run metadata."""

from __future__ import annotations

import dataclasses
import json
import typing
from typing import Any, Dict, List, Optional

from .dynamics import MODES, SOLVERS


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclasses.dataclass
class DomainConfig:
    kind: str = "disk"
    radius: float = 1.0
    depth: float = 1.0
    length: float = 1.0
    charts: int = 8
    kappa0: float = 0.2
    chart_depth: float = 0.5


@dataclasses.dataclass
class GridConfig:
    n1: int = 64
    n2: int = 32


@dataclasses.dataclass
class PhysicsConfig:
    sigma: float = 1.0
    kappa: float = 0.02
    eps: float = 0.0
    mode: str = "kappa_sigma_pos"
    eps0: Optional[float] = 2.5
    relax: float = 0.0
    taylor_override: bool = False


@dataclasses.dataclass
class TimeConfig:
    t_end: float = 1.0
    dt: Optional[float] = None
    cfl: float = 0.3
    dt_max: float = 1e-2
    parabolic_safety: float = 1.0
    div_tol: float = 1e-3
    max_steps: int = 1_000_000
    solver: str = "consistent"
    mollifier: str = "bump"


@dataclasses.dataclass
class InitialConfig:
    kind: str = "zero"
    velocity: List[float] = dataclasses.field(default_factory=lambda: [0.0, 0.0])
    omega: float = 1.0
    strength: float = 1.0
    mode: int = 1
    amplitude: Optional[float] = None
    path: Optional[str] = None


@dataclasses.dataclass
class OutputConfig:
    dir: str = "kappaflow-out"
    snapshot_every: int = 0


@dataclasses.dataclass
class DispersionConfig:
    modes: List[int] = dataclasses.field(default_factory=lambda: [1, 2, 3])
    periods: float = 1.25
    amplitude: Optional[float] = None


@dataclasses.dataclass
class SweepConfig:
    parameter: str = "kappa"
    values: List[float] = dataclasses.field(default_factory=lambda: [0.08, 0.04, 0.02])


@dataclasses.dataclass
class RunConfig:
    domain: DomainConfig = dataclasses.field(default_factory=DomainConfig)
    grid: GridConfig = dataclasses.field(default_factory=GridConfig)
    physics: PhysicsConfig = dataclasses.field(default_factory=PhysicsConfig)
    time: TimeConfig = dataclasses.field(default_factory=TimeConfig)
    initial: InitialConfig = dataclasses.field(default_factory=InitialConfig)
    output: OutputConfig = dataclasses.field(default_factory=OutputConfig)
    dispersion: DispersionConfig = dataclasses.field(default_factory=DispersionConfig)
    sweep: SweepConfig = dataclasses.field(default_factory=SweepConfig)
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        d, g, p, t, i = self.domain, self.grid, self.physics, self.time, self.initial
        if d.kind == "periodic_strip":
            d.kind = "strip"
        _check(d.kind in ("disk", "strip"), "domain.kind must be 'disk' or 'strip' ('periodic_strip')")
        _check(d.radius > 0 and d.depth > 0 and d.length > 0, "domain sizes must be positive")
        _check(d.charts >= 3 or d.kind == "strip", "a disk needs at least three charts")
        _check(0 < d.kappa0 < 0.5, "domain.kappa0 must lie in (0, 1/2)")
        _check(0 < d.chart_depth < 1, "domain.chart_depth must lie in (0, 1)")
        _check(g.n1 >= 8 and g.n2 >= 6, "grid too small (n1 >= 8, n2 >= 6)")
        _check(d.kind != "disk" or g.n1 % 2 == 0, "disk grids need an even n1")
        _check(p.sigma >= 0, "physics.sigma must be nonnegative")
        _check(0 < p.kappa < d.kappa0 / 2, f"physics.kappa must lie in (0, kappa0/2 = {d.kappa0 / 2})")
        _check(p.eps >= 0, "physics.eps must be nonnegative")
        _check(p.mode in MODES, f"physics.mode must be one of {MODES}")
        _check(p.mode != "penalized" or p.eps > 0, "penalized mode needs eps > 0")
        _check(p.mode != "kappa_sigma0_transport" or p.sigma == 0, "transport mode needs sigma = 0")
        _check(p.eps0 is None or p.eps0 > 0, "physics.eps0 must be positive or null")
        _check(t.t_end >= 0, "time.t_end must be nonnegative")
        _check(t.dt is None or t.dt > 0, "time.dt must be positive or null")
        _check(t.cfl > 0 and t.dt_max > 0 and t.parabolic_safety > 0, "time step controls must be positive")
        _check(t.div_tol > 0, "time.div_tol must be positive")
        _check(t.max_steps >= 0, "time.max_steps must be nonnegative")
        _check(t.solver in SOLVERS, f"time.solver must be one of {SOLVERS}")
        _check(t.mollifier in ("bump", "quartic"), "time.mollifier must be 'bump' or 'quartic'")
        _check(i.kind in ("zero", "translation", "rotation", "strain", "standing_wave", "file"),
               "initial.kind is not recognised")
        _check(len(i.velocity) == 2, "initial.velocity needs two components")
        _check(i.kind != "file" or bool(i.path), "initial.kind 'file' needs initial.path")
        _check(i.kind != "standing_wave" or d.kind == "strip", "standing waves need the strip")
        _check(i.mode >= 1, "initial.mode must be a positive integer")
        _check(self.output.snapshot_every >= 0, "output.snapshot_every must be nonnegative")
        _check(all(m >= 1 for m in self.dispersion.modes) and self.dispersion.periods > 0,
               "dispersion modes and periods must be positive")
        _check(self.sweep.parameter in ("kappa", "epsilon", "resolution"),
               "sweep.parameter must be kappa, epsilon or resolution")
        _check(len(self.sweep.values) >= 2, "sweep needs at least two values")
        return self


def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        tp = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(tp), typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be an object")
        return _build(tp, value, where)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return [_coerce(args[0], v, f"{where}[{n}]") for n, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    raise ConfigError(f"{where}: unsupported type")


def _build(cls, data: Dict[str, Any], where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(where + '.' + u if where else u for u in unknown)}")
    kw = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in data.items()}
    return cls(**kw)


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    return _build(RunConfig, data).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    return config_from_dict(data)
