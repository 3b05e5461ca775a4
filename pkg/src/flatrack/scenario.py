"""Scenario files: JSON documents describing one closed-loop experiment."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .controllers import ReferenceSignal
from .errors import ConfigError
from .plants import PlantModel, plant_by_name
from .sim import SimConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlantSpec(_Strict):
    name: str = Field(pattern=r"^(pendulum|bicycle|chain[1-6])$")
    params: dict[str, Union[float, list[float]]] = Field(default_factory=dict)


class ControllerSpec(_Strict):
    type: Literal["dnrc-generic", "dnrc-flat", "snrc"] = "dnrc-flat"
    T: float = Field(gt=0, le=100)
    alpha: float = Field(default=100.0, gt=0, le=1e7)
    dt: float = Field(default=1e-3, gt=0, le=1.0)
    t_final: float = Field(gt=0, le=1e5)
    dt_pred: Optional[float] = Field(default=None, gt=0)
    x0: list[float] = Field(min_length=1)
    u0: Optional[list[float]] = None
    seed: int = 0

    @model_validator(mode="after")
    def _horizon_vs_step(self):
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        return self


class ZeroReference(_Strict):
    kind: Literal["zero"]


class SinusoidReference(_Strict):
    kind: Literal["sin2d", "sinusoid"]
    amplitudes: list[float] = Field(min_length=1)
    frequencies: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.amplitudes) != len(self.frequencies):
            raise ValueError("amplitudes and frequencies must have equal length")
        return self


class TabulatedReference(_Strict):
    kind: Literal["tabulated"]
    times: list[float] = Field(min_length=2)
    values: list[list[float]] = Field(min_length=2)


Reference = Annotated[Union[ZeroReference, SinusoidReference, TabulatedReference],
                      Field(discriminator="kind")]


class Outputs(_Strict):
    trace: Optional[str] = None
    metrics: Optional[str] = None


class Scenario(_Strict):
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    plant: PlantSpec
    controller: ControllerSpec
    reference: Reference = Field(default_factory=lambda: ZeroReference(kind="zero"))
    outputs: Outputs = Field(default_factory=Outputs)

    def build_plant(self) -> PlantModel:
        try:
            return plant_by_name(self.plant.name, self.plant.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError("plant.params", str(exc)) from exc

    def build_reference(self, dim: int) -> ReferenceSignal:
        ref = self.reference
        if isinstance(ref, ZeroReference):
            return ReferenceSignal.zero(dim)
        if isinstance(ref, SinusoidReference):
            if len(ref.amplitudes) != dim:
                raise ConfigError("reference.amplitudes", f"expected {dim} components")
            return ReferenceSignal.sinusoid(ref.amplitudes, ref.frequencies)
        if any(len(row) != dim for row in ref.values):
            raise ConfigError("reference.values", f"every row needs {dim} components")
        try:
            return ReferenceSignal.tabulated(ref.times, ref.values)
        except ValueError as exc:
            raise ConfigError("reference.times", str(exc)) from exc

    def sim_config(self, plant: PlantModel) -> SimConfig:
        c = self.controller
        if len(c.x0) != plant.state_dim:
            raise ConfigError("controller.x0", f"expected {plant.state_dim} entries")
        if c.u0 is not None and len(c.u0) != plant.input_dim:
            raise ConfigError("controller.u0", f"expected {plant.input_dim} entries")
        return SimConfig(T=c.T, t_final=c.t_final, x0=list(c.x0), controller=c.type,
                         alpha=c.alpha, dt=c.dt, u0=c.u0, dt_pred=c.dt_pred, seed=c.seed)


def _field_path(loc) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts) or "<root>"


def parse_scenario(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        # drop the discriminator tag pydantic inserts into union locations
        loc = [p for p in err["loc"] if p not in ("zero", "sin2d", "sinusoid", "tabulated")]
        raise ConfigError(_field_path(loc), err["msg"]) from exc


def bundled_names() -> list[str]:
    root = resources.files("flatrack") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    path = Path(ref)
    if path.is_file():
        return path
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in bundled_names():
        return Path(str(resources.files("flatrack") / "scenarios" / f"{name}.json"))
    raise ConfigError("<file>", f"no such scenario file or bundled scenario: {ref}")


def load_scenario(ref: str) -> Scenario:
    path = resolve_path(ref)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("<root>", "scenario must be a JSON object")
    return parse_scenario(data)


def json_schema() -> dict:
    return Scenario.model_json_schema()
