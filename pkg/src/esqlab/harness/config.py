"""Experiment configuration: YAML files validated by pydantic models."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..fields import GridSpec
from ..kernels import CUTOFF_KINDS, CutOff, make_cutoff
from ..potentials import FAMILIES, Potential, builtin_potential
from ..solver import SolveConfig

SCHEMA_VERSION = 1
MIN_STATISTICAL_REPLICAS = 100
WORKERS_ENV = "ESQLAB_WORKERS"


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    L: float = Field(32.0, gt=0)
    N: int = 256
    n: int = Field(1, ge=1)
    m2: float = Field(1.0, gt=0)

    @field_validator("N")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v < 8 or v & (v - 1):
            raise ValueError("N must be a power of two >= 8")
        return v

    def build(self) -> GridSpec:
        return GridSpec(self.L, self.N, self.n, self.m2)


class PotentialConfig(_Strict):
    name: str = "quartic"
    params: dict[str, Any] = Field(default_factory=lambda: {"lam": 0.2})

    @field_validator("name")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in FAMILIES:
            raise ValueError(f"unknown potential family {v!r}; known: {', '.join(FAMILIES)}")
        return v


class CutoffConfig(_Strict):
    kind: str = "exp-sqrt"
    b: float = Field(1.0, gt=0)
    radius: float = Field(0.0, ge=0)

    @field_validator("kind")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in CUTOFF_KINDS:
            raise ValueError(f"unknown cut-off family {v!r}; known: {', '.join(CUTOFF_KINDS)}")
        return v


class SolverSettings(_Strict):
    method: Literal["newton", "fixed_point"] = "newton"
    damping: float = Field(0.5, gt=0, le=1)
    max_iterations: int = Field(500, ge=1)
    residual_tolerance: float = Field(1e-9, gt=0)
    multistart_count: int = Field(0, ge=0)
    initial_scale: float = Field(1.0, gt=0)

    def build(self, seed: int = 0) -> SolveConfig:
        return SolveConfig(
            method=self.method,
            damping=self.damping,
            max_iterations=self.max_iterations,
            residual_tolerance=self.residual_tolerance,
            multistart_count=max(self.multistart_count, 1),
            initial_scale=self.initial_scale,
            seed=seed,
        )


class Observable(_Strict):
    """h(y) = y_c^power, or the indicator of lo <= y_c < hi."""

    kind: Literal["monomial", "bin"] = "monomial"
    power: int = Field(2, ge=0)
    component: int = Field(0, ge=0)
    lo: float | None = None
    hi: float | None = None

    @model_validator(mode="after")
    def _bin_edges(self):
        if self.kind == "bin" and (self.lo is None or self.hi is None or not self.lo < self.hi):
            raise ValueError("bin observables need lo < hi")
        return self

    @property
    def label(self) -> str:
        if self.kind == "monomial":
            return f"y{self.component}^{self.power}"
        return f"1[{self.lo:g}<=y{self.component}<{self.hi:g}]"

    def __call__(self, y):
        x = y[self.component]
        if self.kind == "monomial":
            return x**self.power
        return ((x >= self.lo) & (x < self.hi)).astype(float)


def _default_observables() -> list[Observable]:
    return [Observable(power=k) for k in (1, 2, 3, 4)]


class OutputConfig(_Strict):
    directory: str = "esqlab-out"
    dump_fields: bool = False


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    grid: GridConfig = GridConfig()
    potential: PotentialConfig = PotentialConfig()
    cutoff: CutoffConfig = CutoffConfig()
    solver: SolverSettings = SolverSettings()
    replicas: int = Field(4000, ge=1)
    seed: int = Field(0, ge=0)
    observables: list[Observable] = Field(default_factory=_default_observables)
    histogram_bins: int = Field(32, ge=2)
    trend_b: list[float] = Field(default_factory=lambda: [1.0, 0.5, 0.25])
    decorrelation_radii: list[float] = Field(default_factory=lambda: [0.0, 2.0, 4.0, 8.0, 16.0])
    max_failure_fraction: float = Field(0.05, ge=0, le=1)
    workers: int = Field(1, ge=1)
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _consistent(self):
        for ob in self.observables:
            if ob.component >= self.grid.n:
                raise ValueError(f"observable {ob.label} refers to component {ob.component} >= n")
        if any(b <= 0 for b in self.trend_b):
            raise ValueError("trend_b entries must be positive")
        # family construction checks CO bounds and potential parameters
        try:
            self.build_cutoff()
        except Exception as exc:
            raise ValueError(f"cutoff: {exc}") from exc
        return self

    @property
    def statistical(self) -> bool:
        return self.replicas >= MIN_STATISTICAL_REPLICAS

    def build_potential(self) -> Potential:
        return builtin_potential(self.potential.name, self.potential.params, self.grid.n, self.grid.m2)

    def build_cutoff(self, b: float | None = None, radius: float | None = None) -> CutOff:
        return make_cutoff(
            self.cutoff.kind,
            self.cutoff.b if b is None else b,
            self.grid.m2,
            self.cutoff.radius if radius is None else radius,
        )

    def with_updates(self, **changes) -> "ExperimentConfig":
        data = self.model_dump()
        for key, value in changes.items():
            node = data
            *head, last = key.split(".")
            for part in head:
                node = node[part]
            node[last] = value
        return ExperimentConfig.model_validate(data)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict | None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from err


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML ({err})") from err
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)
