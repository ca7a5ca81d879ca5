"""Flat ``key = value`` run configuration with ``#`` comments."""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .grid_spectral import Grid2D
from .solver import SolverConfig

OUTDIR_ENV = "FDKP_WAVES_OUTDIR"
FORMATS = ("json", "csv")
ORACLE_MODES = ("fixture", "compute")


class ConfigError(ValueError):
    """Configuration text or values are invalid."""


@dataclass(frozen=True)
class RunConfig:
    # solver
    method: str = "nehari_pg"
    target: str = "kp0"
    eps: float = 0.1
    beta: float = 7.0 / 3.0
    delta: float = 0.3
    p: int = 2
    tau: float = 1.0
    grad_tol: float = 1e-10
    res_tol: float = 1e-10
    max_iter: int = 2000
    seed: int = 0
    initial_guess: str = "lump"
    initial_file: str = ""
    noise: float = 0.0
    M: float = 20.0
    dealias: bool = False
    precondition: bool = True
    picard_tol: float = 1e-13
    picard_max_iter: int = 200
    stall_window: int = 50
    s: float = 2.0
    force: bool = False
    # grid of the KP-scaled profile; full-dispersion fields live on (lx/eps, ly/eps^2)
    nx: int | None = None
    ny: int | None = None
    lx: float = 100.0
    ly: float = 100.0
    # outputs and studies
    outdir: str = "fdkp_out"
    sweep: tuple = (0.2, 0.1, 0.05)
    sweep_target: str = "fdkp_direct"
    formats: tuple = FORMATS
    jobs: int = 1
    timing: bool = False
    oracle: str = "fixture"
    lump_eps: float = 1.0

    def __post_init__(self):
        try:
            self.solver_config()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.sweep_target not in ("fdkp_direct", "fdkp_reduced"):
            raise ConfigError(f"sweep_target must be fdkp_direct or fdkp_reduced, got {self.sweep_target!r}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigError(f"formats must be a non-empty subset of {FORMATS}, got {self.formats}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.oracle not in ORACLE_MODES:
            raise ConfigError(f"oracle must be one of {ORACLE_MODES}, got {self.oracle!r}")
        if not 0.0 < self.lump_eps <= 1.0:
            raise ConfigError(f"lump_eps must lie in (0, 1], got {self.lump_eps}")
        if any(not (isinstance(e, float) and math.isfinite(e)) for e in self.sweep):
            raise ConfigError(f"sweep must list finite numbers, got {self.sweep}")

    def solver_config(self, **overrides) -> SolverConfig:
        names = {f.name for f in fields(SolverConfig)}
        kw = {k: getattr(self, k) for k in names}
        kw.update(overrides)
        return SolverConfig(**kw)

    def resolved_shape(self, target: str | None = None) -> tuple[int, int]:
        """Mode counts; unset values default to 512x512 for KP and 1024x512 for full dispersion."""
        target = target or self.target
        nx = self.nx if self.nx is not None else (512 if target == "kp0" else 1024)
        ny = self.ny if self.ny is not None else 512
        return nx, ny

    def grid(self, target: str | None = None) -> Grid2D:
        nx, ny = self.resolved_shape(target)
        return Grid2D(nx, ny, self.lx, self.ly)

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTDIR_ENV) or self.outdir)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig.__dataclass_fields__


def _kind(name: str) -> str:
    default = _DEFAULTS[name].default
    if name in ("nx", "ny"):
        return "optint"
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, tuple):
        return "floats" if name == "sweep" else "strs"
    return "str"


def _convert(name: str, text: str):
    kind = _kind(name)
    text = text.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "int":
            val = float(text)
            if val != int(val):
                raise ValueError(f"not an integer: {text!r}")
            return int(val)
        if kind == "optint":
            if text.lower() in ("", "auto"):
                return None
            val = float(text)
            if val != int(val):
                raise ValueError(f"not an integer: {text!r}")
            return int(val)
        if kind == "float":
            if "/" in text:
                num, den = text.split("/", 1)
                return float(num) / float(den)
            return float(text)
        if kind == "floats":
            return tuple(float(t) for t in text.split(",") if t.strip())
        if kind == "strs":
            return tuple(t.strip() for t in text.split(",") if t.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _render(name: str, value) -> str:
    kind = _kind(name)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "optint":
        return "auto" if value is None else str(value)
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "strs":
        return ", ".join(value)
    return str(value)


def parse_pairs(pairs: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(pairs) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {k: _convert(k, v) for k, v in pairs.items()}
    base = base or RunConfig()
    try:
        return dataclasses.replace(base, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = val
    return parse_pairs(pairs, base)


def load(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_text(text, base)


def emit(config: RunConfig) -> str:
    lines = ["# fdkp_waves run configuration"]
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {_render(f.name, getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def option_names() -> list[str]:
    return [f.name for f in fields(RunConfig)]
