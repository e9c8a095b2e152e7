"""TOML experiment configuration, validated with pydantic (unknown keys rejected).

Layout (every section optional except the ones the chosen subcommand reads)::

    seed = 0
    output = "out"

    [volume]                 # bulk density family
    family = "laminate"
    params = { values = [1.0, 3.0] }
    constants = {}           # optional overrides of the declared constants

    [surface]
    family = "iso_norm"
    params = { c = 2.0 }

    [discretization]
    n = 1
    h = 0.125
    levels = 129
    solver = "auto"          # auto | dp | heuristic
    scaling = "domain"       # domain | epsilon

    [homogenize]
    formulas = ["f_hom", "g_hom", "f_hom_inf"]
    r_schedule = [4, 8, 16, 32, 64]
    xi = [0.5, 1.0, 2.0]     # scalars in 1D, n-vectors otherwise
    zeta = [1.0]
    nu = [[1.0]]

    [cell_solve]
    pair = "F_G"
    datum = "linear"         # linear | step
    r = 4.0

    [stochastic]
    ensemble = { kind = "iid_cell", law = [[1.0, 0.5], [3.0, 0.5]], surface_law = [[2.0, 1.0]] }
    process = "volume"
    r_schedule = [16, 32, 64, 128]
    n_omega = 32

    [gamma]
    interval = [0.0, 3.0]
    epsilons = [0.25, 0.125, 0.0625]
    target = { position = 1.3, low = 0.0, high = 1.0 }
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

Number = Union[float, int]
Vector = Union[Number, list[Number]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IntegrandSpec(_Strict):
    family: str
    params: dict[str, Any] = Field(default_factory=dict)
    constants: dict[str, float] = Field(default_factory=dict)


class Discretization(_Strict):
    n: Literal[1, 2] = 1
    h: float = Field(0.125, gt=0)
    levels: int = Field(129, ge=3, le=2001)
    span_factor: float = Field(1.5, gt=0)
    min_span: float = Field(1.0, gt=0)
    anchors: bool = True
    solver: Literal["auto", "dp", "heuristic"] = "auto"
    scaling: Literal["domain", "epsilon"] = "domain"
    bc_width: Optional[float] = Field(None, gt=0)
    sweeps: int = Field(60, ge=1)
    restarts: int = Field(2, ge=1)

    @field_validator("levels")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("levels must be odd")
        return v


class HomogenizeSection(_Strict):
    formulas: list[Literal["f_hom", "g_hom", "f_hom_inf"]] = ["f_hom", "g_hom"]
    r_schedule: list[Number] = [4, 8, 16, 32, 64]
    xi: list[Vector] = [0.5, 1.0, 2.0]
    zeta: list[Vector] = [1.0]
    nu: Optional[list[list[float]]] = None
    x: Optional[list[float]] = None
    k: int = Field(1, ge=1)
    route: Literal["cell", "recession"] = "cell"
    bc_mode: Literal["full", "perpendicular_only"] = "full"
    tail_window: Optional[int] = Field(None, ge=1)
    spread_tol: Optional[float] = Field(None, gt=0)

    @field_validator("r_schedule")
    @classmethod
    def _schedule(cls, v):
        if len(v) < 3 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("r_schedule needs >= 3 increasing entries")
        return v


class CellSolveSection(_Strict):
    pair: Literal["F_G0", "FINF_G", "FINF_G0", "F_G"] = "F_G"
    datum: Literal["linear", "step"] = "linear"
    xi: Vector = 1.0
    zeta: Vector = 1.0
    x0: Optional[list[float]] = None
    nu: Optional[list[float]] = None
    r: float = Field(4.0, gt=0)
    k: int = Field(1, ge=1)
    bc_mode: Literal["full", "perpendicular_only"] = "full"
    write_field: bool = True


class EnsembleSpec(_Strict):
    kind: Literal["checkerboard", "iid_cell", "poisson_inclusion"] = "iid_cell"
    law: list[tuple[float, float]]
    surface_law: Optional[list[tuple[float, float]]] = None
    n: Literal[1, 2] = 1
    radius: float = 0.4


class StochasticSection(_Strict):
    ensemble: EnsembleSpec
    process: Literal["volume", "surface"] = "volume"
    xi: Vector = 1.0
    zeta: Vector = 1.0
    nu: Optional[list[float]] = None
    h: float = Field(0.5, gt=0)
    c: float = Field(0.5, gt=0)
    r_schedule: list[int] = [16, 32, 64, 128]
    n_omega: int = Field(32, ge=1)
    tail_window: int = Field(2, ge=1)


class StepTarget(_Strict):
    position: float = 1.3
    low: float = 0.0
    high: float = 1.0


class GammaSection(_Strict):
    interval: tuple[float, float] = (0.0, 3.0)
    epsilons: list[float] = [0.25, 0.125, 0.0625]
    target: StepTarget = StepTarget()
    cells_per_period: int = Field(8, ge=1)
    levels: int = Field(61, ge=3)
    span: float = Field(1.5, gt=0)
    hom_r_schedule: list[Number] = [4, 8, 16, 32, 64]
    hom_xi: list[float] = [0.5, 1.0, 2.0, 4.0]
    hom_zeta: list[float] = [0.5, 1.0, 2.0]

    @model_validator(mode="after")
    def _check(self):
        if self.interval[1] <= self.interval[0]:
            raise ValueError("interval must be increasing")
        if not self.epsilons or min(self.epsilons) <= 0:
            raise ValueError("epsilons must be positive")
        return self


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    output: str = "out"
    volume: Optional[IntegrandSpec] = None
    surface: Optional[IntegrandSpec] = None
    discretization: Discretization = Discretization()
    check: dict[str, Any] = Field(default_factory=dict)
    homogenize: Optional[HomogenizeSection] = None
    cell_solve: Optional[CellSolveSection] = None
    stochastic: Optional[StochasticSection] = None
    gamma: Optional[GammaSection] = None

    def require(self, *names: str):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing section [{name}]", name)

    def digest(self) -> str:
        """sha256 of the canonical JSON of the validated config."""
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _location(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], _location(first)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", str(path)) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", str(path)) from exc
    return parse_config(data)
