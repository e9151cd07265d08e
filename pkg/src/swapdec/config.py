"""Experiment configuration files (JSON, strict schema)."""
from __future__ import annotations

import json
import re
from math import log, pi
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

EXPERIMENTS = ("swap-trace", "decay", "zeno", "lg", "sieve-check")
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    pass


def _at_least(lo):
    def check(v):
        if v < lo:
            raise ValueError(f"must be ≥ {lo}")
        return v

    return AfterValidator(check)


def _probability(v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise ValueError("must lie in [0, 1]")
    return v


def _efficiency(v: float) -> float:
    if v < log(2) * (1 - 1e-15):
        raise ValueError("must be ≥ ln 2 (0.6931471805599453)")
    return v


def _positive(v: float) -> float:
    if v <= 0:
        raise ValueError("must be > 0")
    return v


AtLeastOne = Annotated[int, _at_least(1)]
Probability = Annotated[float, AfterValidator(_probability)]
Efficiency = Annotated[float, AfterValidator(_efficiency)]
Positive = Annotated[float, AfterValidator(_positive)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BlochAngles(_Strict):
    theta: float
    phi: float = 0.0

    def pair(self) -> tuple[float, float]:
        return (self.theta, self.phi)


_PLUS = BlochAngles(theta=pi / 2)


class SwapParams(_Strict):
    sequence: list[Literal["R", "P"]] = Field(default_factory=lambda: ["R", "P", "R"], min_length=1)
    uncompute: bool = True
    reference_state: BlochAngles = _PLUS
    pointer_state: BlochAngles = _PLUS


class DecayParams(_Strict):
    n: AtLeastOne
    m: AtLeastOne
    p_int: Probability
    trials: AtLeastOne = 1000
    mode: Literal["unitary", "recorded"] = "unitary"
    pointer_state: BlochAngles = _PLUS
    reference_qubits: AtLeastOne = 1
    reference_bit: Literal[0, 1] = 1
    environment: Literal["retain", "compress"] = "retain"
    c: Efficiency = log(2)
    temperature: Positive = 300.0
    fit: bool = True
    bootstrap: Annotated[int, _at_least(0)] = 0


class ZenoParams(_Strict):
    n: Literal[1] = 1
    m: AtLeastOne
    trials: AtLeastOne = 100
    epsilon: float = 0.0
    pointer_state: BlochAngles = _PLUS
    c: Efficiency = log(2)
    temperature: Positive = 300.0


class LGParams(_Strict):
    omega: float = pi / 3
    tau: float = 1.0
    thetas: Optional[list[float]] = None
    trials: AtLeastOne = 10000
    control: bool = True


class ObservableSpec(_Strict):
    id: str
    kind: Literal["reference", "pointer"]
    target: str
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)


class ScheduleSpec(_Strict):
    kind: Literal["rows", "uniform", "round-robin"] = "rows"
    rows: Optional[list[list[float]]] = None
    ticks: Optional[AtLeastOne] = None
    dt: Positive = 1.0

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "rows" and not self.rows:
            raise ValueError("rows schedule needs a nonempty 'rows' list")
        if self.kind != "rows" and self.ticks is None:
            raise ValueError(f"{self.kind} schedule needs 'ticks'")
        return self


class SieveParams(_Strict):
    catalog: list[ObservableSpec] = Field(min_length=1)
    reference_spec: dict[str, Literal[0, 1]] = Field(default_factory=dict)
    schedule: Optional[ScheduleSpec] = None
    initial_state: dict[str, BlochAngles] = Field(default_factory=dict)
    mode: Literal["unitary", "recorded"] = "recorded"
    c: Efficiency = log(2)
    temperature: Positive = 300.0

    @model_validator(mode="after")
    def _references_defined(self):
        ids = [o.id for o in self.catalog]
        if len(set(ids)) != len(ids):
            raise ValueError("catalog ids must be unique")
        kinds = {o.id: o.kind for o in self.catalog}
        for key in self.reference_spec:
            if key not in kinds:
                raise ValueError(f"reference_spec refers to undefined observable {key!r}")
            if kinds[key] != "reference":
                raise ValueError(f"reference_spec key {key!r} is not a reference observable")
        if self.schedule is not None and self.schedule.rows is not None:
            widths = {len(r) for r in self.schedule.rows}
            if widths != {len(self.catalog)}:
                raise ValueError(f"schedule rows must have {len(self.catalog)} entries (one per catalog observable)")
        return self


PARAMS = {
    "swap-trace": SwapParams,
    "decay": DecayParams,
    "zeno": ZenoParams,
    "lg": LGParams,
    "sieve-check": SieveParams,
}


class OutputSpec(_Strict):
    dir: Optional[str] = None


class ExperimentConfig(_Strict):
    experiment: Literal["swap-trace", "decay", "zeno", "lg", "sieve-check"]
    seed: Optional[Annotated[int, Field(ge=0, le=U64_MAX)]] = None
    units: Literal["physical", "natural"] = "physical"
    parameters: Union[SwapParams, DecayParams, ZenoParams, LGParams, SieveParams]
    output: OutputSpec = OutputSpec()

    @model_validator(mode="before")
    @classmethod
    def _dispatch(cls, data):
        if isinstance(data, dict) and data.get("experiment") in PARAMS:
            params = data.get("parameters", {})
            if isinstance(params, dict):
                try:
                    params = PARAMS[data["experiment"]].model_validate(params)
                except ValidationError as e:
                    raise _Nested(e) from None
            data = {**data, "parameters": params}
        return data

    def with_overrides(self, **changes) -> ExperimentConfig:
        data = self.model_dump(mode="json")
        params = changes.pop("parameters", {})
        data.update({k: v for k, v in changes.items() if v is not None})
        data["parameters"].update({k: v for k, v in params.items() if v is not None})
        return ExperimentConfig.model_validate(data)


class _Nested(ValueError):
    """Carries a parameter-block ValidationError out of the dispatcher."""

    def __init__(self, error: ValidationError):
        super().__init__(str(error))
        self.error = error


def _line_of(text: str, key) -> int | None:
    if not isinstance(key, str):
        return None
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def _format(errors, text: str, prefix: tuple = ()) -> list[str]:
    lines = []
    for err in errors:
        loc = prefix + tuple(err["loc"])
        # the union field reports every candidate; the dispatcher already picked one
        loc = tuple(p for p in loc if p not in {m.__name__ for m in PARAMS.values()})
        msg = err["msg"].removeprefix("Value error, ")
        name = ".".join(str(p) for p in loc) or "config"
        keys = [p for p in loc if isinstance(p, str)]
        line = _line_of(text, keys[-1]) if keys else None
        where = f" (line {line})" if line else ""
        sep = " " if msg.startswith("must") else ": "
        lines.append(f"{name}{sep}{msg}{where}")
    return lines


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(data)
    except _Nested as nested:
        raise ConfigError("; ".join(_format(nested.error.errors(), text, ("parameters",)))) from None
    except ValidationError as e:
        nested = [x for x in e.errors() if isinstance(x.get("ctx", {}).get("error"), _Nested)]
        if nested:
            inner = nested[0]["ctx"]["error"].error
            raise ConfigError("; ".join(_format(inner.errors(), text, ("parameters",)))) from None
        raise ConfigError("; ".join(_format(e.errors(), text))) from None


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def scenario_path(name: str) -> Path:
    from importlib import resources

    stem = name.removesuffix(".json")
    path = Path(str(resources.files("swapdec") / "scenarios" / f"{stem}.json"))
    if not path.exists():
        available = ", ".join(sorted(p.stem for p in path.parent.glob("*.json")))
        raise ConfigError(f"unknown scenario {name!r}; available: {available}")
    return path
