"""Versioned run configuration: YAML text validated by pydantic models.

Unknown keys are rejected.  ``dump(load(text))`` reproduces the resolved
configuration, so every output can embed it verbatim.

Example::

    schema_version: 1
    grid: {d: 1, n: 64}
    model:
      operator: porous_media
      p: 1.5
      graph: {type: power, p: 1.5, nu: 0.0}
    noise: {coeffs: [0.02, 0.02]}
    initial: {kind: sine, amplitude: 0.2}
    simulation: {T: 1.0, dt: 0.001, mu: 0.001, stride: 10}
    extinction: {N: 400, floor: 0.5}
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import graphs as G
from .operators import MultiValuedOperator, SingleValuedDrift
from .sde import NoiseModel, SimConfig
from .spaces import GelfandTriple, Grid

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration text, with a location when known."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    d: Literal[1, 2] = 1
    n: int = Field(32, ge=2)


class ModelSpec(_Strict):
    operator: Literal["porous_media", "phi_laplace", "subdifferential"] = "porous_media"
    p: float = Field(1.5, gt=1)
    alpha: Optional[float] = Field(None, gt=1)
    graph: dict = Field(default_factory=lambda: {"type": "power", "p": 1.5, "nu": 0.0})

    @field_validator("graph")
    @classmethod
    def _graph_ok(cls, v):
        if "type" not in v:
            raise ValueError("graph needs a 'type'")
        G.from_spec(v)
        return v


class DriftSpec(_Strict):
    kind: Literal["zero", "reaction_diffusion"] = "zero"
    coeffs: list[float] = Field(default_factory=list)
    advection: float = 0.0
    f: Optional[float] = None
    C: Optional[float] = None
    beta: float = 0.0


class NoiseSpec(_Strict):
    coeffs: list[float] = Field(default_factory=list)
    family: Literal["constant", "exp_decay"] = "constant"
    gamma: float = 0.0


class InitialSpec(_Strict):
    kind: Literal["sine", "zero", "values"] = "sine"
    amplitude: float = 1.0
    modes: list[int] = Field(default_factory=lambda: [1])
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _values_present(self):
        if self.kind == "values" and not self.values:
            raise ValueError("initial kind 'values' needs a values list")
        return self


class SimulationSpec(_Strict):
    T: float = Field(0.1, gt=0)
    dt: float = Field(1e-3, gt=0)
    mu: float = Field(1e-3, gt=0)
    scheme: Literal["implicit", "semi-implicit-linear", "explicit"] = "implicit"
    eps: Optional[float] = Field(None, gt=0)
    stride: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    N: int = Field(1, ge=1)


class ExtinctionSpec(_Strict):
    N: int = Field(400, ge=1)
    checkpoints: int = Field(10, ge=1)
    floor: Optional[float] = Field(None, gt=0, lt=1)  # choose T so the bound equals this value
    c0: Optional[float] = Field(None, gt=0)


class SweepSpec(_Strict):
    mus: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    N: int = Field(100, ge=1)
    checkpoints: list[float] = Field(default_factory=list)


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    grid: GridSpec = GridSpec()
    model: ModelSpec = ModelSpec()
    drift: DriftSpec = DriftSpec()
    noise: NoiseSpec = NoiseSpec()
    initial: InitialSpec = InitialSpec()
    simulation: SimulationSpec = SimulationSpec()
    extinction: ExtinctionSpec = ExtinctionSpec()
    sweep: SweepSpec = SweepSpec()

    # -- builders --------------------------------------------------------------
    def build_grid(self) -> Grid:
        return Grid(self.grid.d, self.grid.n)

    def build_operator(self) -> MultiValuedOperator:
        grid = self.build_grid()
        tk = "porous_media" if self.model.operator == "porous_media" else "phi_laplace"
        triple = GelfandTriple(grid, tk, self.model.p, self.model.alpha)
        return MultiValuedOperator(self.model.operator, G.from_spec(self.model.graph), triple)

    def build_initial(self, grid: Grid) -> np.ndarray:
        ini = self.initial
        if ini.kind == "zero":
            return grid.field(np.zeros(grid.size))
        if ini.kind == "values":
            return grid.field(np.asarray(ini.values, dtype=float))
        modes = list(ini.modes) + [1] * (grid.d - len(ini.modes))
        return ini.amplitude * grid.sine_mode(*modes[: grid.d])

    def build_sim(self, **overrides) -> SimConfig:
        op = self.build_operator()
        s = self.simulation
        d = self.drift
        drift = SingleValuedDrift(d.kind, tuple(d.coeffs), d.advection, None, d.f, d.C, d.beta)
        noise = NoiseModel(tuple(self.noise.coeffs), self.noise.family, self.noise.gamma)
        kw = dict(T=s.T, dt=s.dt, mu=s.mu, drift=drift, noise=noise, seed=s.seed,
                  scheme=s.scheme, eps=s.eps, stride=s.stride)
        kw.update(overrides)
        return SimConfig(op, self.build_initial(op.grid), **kw)


def _location(exc) -> str:
    mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
    if mark is None:
        return ""
    return f" at line {mark.line + 1}, column {mark.column + 1}"


def parse_yaml(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error{_location(exc)}: {problem}") from None


def _node_mark(text: str, loc) -> str:
    """Line and column of the YAML node at a pydantic error location."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return ""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            hit = [(k, v) for k, v in node.value if k.value == key]
            if not hit:
                break
            k, node = hit[0]
            if key == loc[-1]:
                node = k if node is None else node
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    if node is None:
        return ""
    m = node.start_mark
    return f"line {m.line + 1}, column {m.column + 1}"


def load(text: str) -> RunConfig:
    data = parse_yaml(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            where = _node_mark(text, err["loc"])
            path = ".".join(str(k) for k in err["loc"])
            msgs.append(f"{path}: {err['msg']}" + (f" ({where})" if where else ""))
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs)) from None


def load_file(path) -> RunConfig:
    with open(path) as fh:
        return load(fh.read())


def to_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)
