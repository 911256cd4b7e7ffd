"""Strict JSON run configuration."""
from __future__ import annotations

import hashlib
import json
import os
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .levy_model import Empirical, ExponentialNegative, LevyModel, build_model, uniform_law
from .quadrature import QuadSpec
from .value_surface import Payoff

SEED_ENV = "LEVYHEDGE_SEED"


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExponentialLaw(_Strict):
    kind: Literal["exponential"]
    delta: float = Field(gt=0)


class UniformLaw(_Strict):
    kind: Literal["uniform"]
    lower: float
    upper: float

    @model_validator(mode="after")
    def _order(self):
        if not self.lower < self.upper:
            raise ValueError("lower must be < upper")
        return self


class EmpiricalLaw(_Strict):
    kind: Literal["empirical"]
    samples: List[float] = Field(min_length=1)


JumpLawConfig = Annotated[Union[ExponentialLaw, UniformLaw, EmpiricalLaw], Field(discriminator="kind")]


class ModelConfig(_Strict):
    u: float = Field(gt=0)
    mu: float = Field(gt=0)
    lambda_: float = Field(alias="lambda", ge=0)
    jump_law: JumpLawConfig
    allow_nonconforming: bool = False

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GridConfig(_Strict):
    t_nodes: int = Field(81, ge=2)
    x_nodes: int = Field(81, ge=2)
    x_max: Optional[float] = Field(None, gt=0)


class MCConfig(_Strict):
    n_paths: int = Field(200_000, ge=2)
    base_seed: int = Field(12345, ge=0, lt=2**63)
    surface_paths: int = Field(200_000, ge=2)
    dump_paths: int = Field(0, ge=0)
    compensator_times: List[float] = [0.5, 1.0, 2.0]


class HedgeConfig(_Strict):
    n_trading_dates: int = Field(1000, ge=1)
    n_paths: int = Field(10_000, ge=2)
    dump_paths: int = Field(3, ge=0)
    surface: Optional[str] = None
    build_surface: bool = False


class QuadConfig(_Strict):
    abs_tol: float = Field(1e-12, gt=0)
    rel_tol: float = Field(1e-10, gt=0)
    tail_cut: float = Field(1e-10, gt=0, le=1e-6)
    panels: int = Field(4096, ge=1)


class OutputConfig(_Strict):
    directory: str = "out"
    formats: List[Literal["csv", "json"]] = ["csv", "json"]


class PayoffConfig(_Strict):
    kind: Literal["constant", "linear", "call"] = "constant"
    params: List[float] = [1.0]

    @model_validator(mode="after")
    def _arity(self):
        need = {"constant": 1, "linear": 2, "call": 1}[self.kind]
        if len(self.params) != need:
            raise ValueError(f"payoff {self.kind!r} takes {need} parameter(s)")
        return self


class IdentityConfig(_Strict):
    times: List[float] = [0.25, 0.5, 1.0]
    n_paths: int = Field(100_000, ge=2)

    @field_validator("times")
    @classmethod
    def _nonneg(cls, v):
        if any(t < 0 for t in v):
            raise ValueError("times must be >= 0")
        return v


class RiskFreeConfig(_Strict):
    tolerance: float = Field(1e-8, gt=0)
    surface: Optional[str] = None
    t_nodes: int = Field(11, ge=2)
    x_nodes: int = Field(21, ge=2)


class RunConfig(_Strict):
    model: ModelConfig
    horizon: float = Field(gt=0)
    grids: GridConfig = GridConfig()
    mc: MCConfig = MCConfig()
    hedge: HedgeConfig = HedgeConfig()
    quad: QuadConfig = QuadConfig()
    output: OutputConfig = OutputConfig()
    payoff: PayoffConfig = PayoffConfig()
    identity: IdentityConfig = IdentityConfig()
    riskfree: RiskFreeConfig = RiskFreeConfig()

    def build_model(self) -> LevyModel:
        m = self.model
        law = m.jump_law
        if law.kind == "exponential":
            jl = ExponentialNegative(law.delta)
        elif law.kind == "uniform":
            jl = uniform_law(law.lower, law.upper)
        else:
            jl = Empirical(law.samples)
        return build_model(m.u, m.mu, m.lambda_, jl, allow_nonconforming=m.allow_nonconforming)

    def quad_spec(self) -> QuadSpec:
        q = self.quad
        return QuadSpec(q.abs_tol, q.rel_tol, q.tail_cut, q.panels)

    def payoff_fn(self) -> Payoff:
        return Payoff(self.payoff.kind, tuple(self.payoff.params))

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def canonical_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, env: Optional[dict] = None) -> RunConfig:
    """Validate a config mapping; LEVYHEDGE_SEED in ``env`` overrides the seed."""
    env = os.environ if env is None else env
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    seed = env.get(SEED_ENV)
    if seed not in (None, ""):
        try:
            s = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
        if not 0 <= s < 2**63:
            raise ConfigError(f"{SEED_ENV} out of range")
        cfg = cfg.model_copy(update={"mc": cfg.mc.model_copy(update={"base_seed": s})})
    try:
        cfg.build_model()
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    return cfg


def load_config(path, env: Optional[dict] = None) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data, env)
