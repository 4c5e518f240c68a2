"""Experiment configuration: parsing, validation and state/pair construction.

Configs are YAML (JSON is accepted as a subset).  Validation errors are
reported as :class:`UsageError` with dotted field paths, e.g.
``model.alpha: Field required``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator

from .errors import DomainError, QSteerError
from .findim import MatrixPair
from .model import TABLE, TOY, ModelSpec, QuantumState

TASKS = ("simulate", "pulse", "steer-window", "small-time", "diameter-sweep",
         "dispersal-curve", "findim", "time-bound")

# subcommand -> task
SUBCOMMAND_TASKS = {
    "simulate": "simulate",
    "pulse": "pulse",
    "steer": "steer-window",
    "small-time": "small-time",
    "disperse": "dispersal-curve",
    "findim": "findim",
    "time-bound": "time-bound",
    "diameter-sweep": "diameter-sweep",
}


class UsageError(QSteerError):
    """Invalid command line or configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    alpha: PositiveFloat
    mode: Literal["toy-torus", "explicit-table"] = TOY
    lam: list[float] | None = Field(default=None, alias="lambda")
    coupling: list[list[list[float]]] | None = None

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    def build(self) -> ModelSpec:
        data: dict[str, Any] = {"alpha": self.alpha, "mode": self.mode}
        if self.mode == TABLE:
            if self.lam is None or self.coupling is None:
                raise UsageError("model: explicit-table mode needs 'lambda' and 'coupling'")
            data["lambda"] = self.lam
            data["coupling"] = self.coupling
        return ModelSpec.from_dict(data)


class Segment(_Strict):
    u: float
    dt: float = Field(ge=0)


class Params(_Strict):
    """Task parameters; each task reads the subset it needs."""

    eps: PositiveFloat | None = None
    T: PositiveFloat | None = None
    T_list: list[PositiveFloat] | None = None
    N0: int | None = Field(default=None, ge=1)
    N0_list: list[int] | None = None
    P: int | None = Field(default=None, ge=1)
    psi0: Any = None
    psi1: Any = None
    pairs: PositiveInt = 1
    truncation: int | None = Field(default=None, ge=2)
    verify_truncation: int | None = Field(default=None, ge=2)
    max_truncation: PositiveInt = 600
    steps_per_period: int | None = Field(default=None, ge=4)
    # simulate
    control: list[Segment] | None = None
    u: float = 0.0
    duration: float | None = Field(default=None, ge=0)
    schedule_file: str | None = None
    # pulse
    j: PositiveInt = 1
    k: PositiveInt = 2
    K: float | None = None
    phi: float = 0.0
    n_list: list[PositiveFloat] = [8, 16, 32, 64]
    # dispersal
    K_max: PositiveFloat | None = None
    grid: int = Field(default=10_000, ge=2)
    # findim
    pair: Any = None
    orbit_grid: int = Field(default=2001, ge=2)
    orbit_K_max: PositiveFloat = 20.0

    @field_validator("N0_list", "T_list")
    @classmethod
    def _nonempty(cls, v):
        if v is not None and len(v) == 0:
            raise ValueError("list must not be empty")
        return v


class ExperimentConfig(_Strict):
    model: ModelConfig
    task: Literal[TASKS]  # type: ignore[valid-type]
    params: Params = Params()
    out: str | None = None
    seed: int = 0
    emit_schedule: bool = False


class SweepConfig(_Strict):
    """Either an explicit ``configs`` list or ``base`` plus a product ``grid``.

    Grid keys are dotted paths into the config, e.g. ``params.eps``.
    """

    configs: list[dict] | None = None
    base: dict | None = None
    grid: dict[str, list] | None = None
    workers: PositiveInt = 1
    out: str | None = None
    seed: int | None = None


def format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def load_mapping(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping at top level")
    return data


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise UsageError(format_validation_error(exc)) from exc


def parse_sweep(data: dict) -> SweepConfig:
    try:
        sw = SweepConfig.model_validate(data)
    except ValidationError as exc:
        raise UsageError(format_validation_error(exc)) from exc
    if (sw.configs is None) == (sw.base is None):
        raise UsageError("sweep: give exactly one of 'configs' or 'base' (+ 'grid')")
    return sw


def set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = data
    for key in keys[:-1]:
        cur = cur.setdefault(key, {})
        if not isinstance(cur, dict):
            raise UsageError(f"grid key {dotted}: '{key}' is not a mapping")
    cur[keys[-1]] = value


def state_from(spec_data, rng: np.random.Generator, name: str) -> QuantumState:
    """Build a state from an int (basis index), ``{basis}``, ``{coeffs, offset}`` or ``{random}``."""
    if spec_data is None:
        raise UsageError(f"params.{name}: Field required")
    try:
        if isinstance(spec_data, bool):
            raise UsageError(f"params.{name}: expected a state description")
        if isinstance(spec_data, int):
            return QuantumState.basis(spec_data)
        if isinstance(spec_data, dict) and "random" in spec_data:
            r = spec_data["random"]
            return QuantumState.random(rng, int(r["first"]), int(r["last"]))
        if isinstance(spec_data, dict):
            psi = QuantumState.from_dict(spec_data)
            if spec_data.get("normalize", False):
                psi = psi.normalized()
            return psi
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"params.{name}: {exc}") from exc
    raise UsageError(f"params.{name}: expected an int, basis, coeffs or random description")


def pair_from(spec_data, spec: ModelSpec, rng: np.random.Generator) -> MatrixPair:
    """``{"A": ..., "B": ...}`` with [re, im] entries, ``{"random": n}`` or ``{"model": n}``."""
    if not isinstance(spec_data, dict):
        raise UsageError("params.pair: expected a mapping")
    try:
        if "random" in spec_data:
            return MatrixPair.random(rng, int(spec_data["random"]))
        if "model" in spec_data:
            return MatrixPair.from_model(spec, int(spec_data["model"]))
        return MatrixPair.from_dict(spec_data)
    except DomainError as exc:
        raise UsageError(f"params.pair: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"params.pair: malformed matrix ({exc})") from exc


def vector_from(data, name: str) -> np.ndarray:
    try:
        return np.array([complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in data])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"params.{name}: malformed vector ({exc})") from exc
