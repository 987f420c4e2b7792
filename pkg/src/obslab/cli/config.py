"""Experiment configuration: strict schema, validated before any compute."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from obslab.errors import ConfigError, ObslabError

COMMANDS = ("pomega", "observability", "decompose", "equilibrium")
PRESETS = ("doubling", "perturbed_expanding", "product_halving", "bowen_oscillating",
           "bowen_physical", "gradient_sinks", "feigenbaum_measure_checks")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemBlock(Strict):
    family: Literal["LinearExpanding", "PerturbedExpanding", "ProductHalving", "GradientTimeOne",
                    "BowenSaddles", "QuadraticFeigenbaum"]
    params: dict[str, Union[float, int, str]] = Field(default_factory=dict)

    def build(self):
        from obslab.dynamics import systems as S

        p = dict(self.params)
        fam = self.family
        allowed = {
            "LinearExpanding": {"d"},
            "PerturbedExpanding": {"d", "eps", "m"},
            "ProductHalving": set(),
            "GradientTimeOne": {"substeps"},
            "BowenSaddles": {"target", "lambda_u_A", "lambda_s_A", "lambda_u_B", "lambda_s_B",
                             "kappa", "tau"},
            "QuadraticFeigenbaum": {"t"},
        }[fam]
        bad = sorted(set(p) - allowed)
        if bad:
            raise ValueError(f"unknown parameter(s) {bad} for {fam}; allowed: {sorted(allowed)}")
        ints = {"d", "m", "substeps"}
        for k in ints & set(p):
            if isinstance(p[k], str) or int(p[k]) != p[k]:
                raise ValueError(f"{k} must be an integer")
            p[k] = int(p[k])
        if fam == "LinearExpanding":
            return S.LinearExpanding(**p)
        if fam == "PerturbedExpanding":
            return S.PerturbedExpanding(**p)
        if fam == "ProductHalving":
            return S.ProductHalving()
        if fam == "GradientTimeOne":
            return S.GradientTimeOne(**p)
        if fam == "QuadraticFeigenbaum":
            return S.QuadraticFeigenbaum(**p)
        target = str(p.pop("target", "oscillating"))
        return S.build_bowen(target, p)


class EnsembleBlock(Strict):
    size: int = Field(400, ge=100)
    seed: int = Field(0, ge=0, lt=2**64)
    n_max: int = Field(10**6, ge=1000, le=10**8)
    mode: Literal["typical", "exact"] = "typical"
    ratio: float = Field(1.1, gt=1.0, le=2.0)


class MetricBlock(Strict):
    basis: Literal["default"] = "default"
    imax: int = Field(64, ge=4, le=64)


class ReferenceBlock(Strict):
    name: str = Field(pattern=r"^[A-Za-z0-9_]+$")
    kind: Literal["lebesgue", "dirac", "atoms", "file", "saddles", "feigenbaum"]
    point: Optional[list[float]] = None
    points: Optional[list[list[float]]] = None
    weights: Optional[list[float]] = None
    path: Optional[str] = None
    weight_A: Optional[float] = Field(None, ge=0.0, le=1.0)
    generation: Optional[int] = Field(None, ge=1, le=10)

    @model_validator(mode="after")
    def _fields(self):
        need = {"dirac": ["point"], "atoms": ["points"], "file": ["path"],
                "saddles": ["weight_A"], "feigenbaum": ["generation"]}.get(self.kind, [])
        for f in need:
            if getattr(self, f) is None:
                raise ValueError(f"reference kind {self.kind!r} needs field {f!r}")
        return self


class ConvexlikeBlock(Strict):
    lambdas: list[float] = Field(default_factory=lambda: [i / 10 for i in range(11)])
    epsilon: float = Field(0.05, gt=0.0)
    K: int = Field(1000, ge=1)
    budget: int = Field(10**7, ge=1000)
    orbit: int = Field(0, ge=0)


class LargeDeviationBlock(Strict):
    r: float = Field(0.1, ge=0.0)
    radius: float = Field(0.1, gt=0.0)


class AnalysisBlock(Strict):
    cluster_tolerance: float = Field(0.02, gt=0.0, lt=1.0)
    tail_fraction: float = Field(0.9, gt=0.0, lt=1.0)
    burn_in: float = Field(0.01, ge=0.0, lt=0.5)
    epsilons: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02, 0.01])
    resolution: Optional[list[int]] = None
    independence_tolerance: Optional[float] = Field(None, gt=0.0, lt=1.0)
    attraction_epsilon: float = Field(0.05, gt=0.0, lt=1.0)
    attraction_records: int = Field(5, ge=0)
    lattice_cap: int = Field(10, ge=1, le=12)
    entropy_order: int = Field(12, ge=1, le=24)
    r_grid: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2, 0.5, 1.0])
    periodic_max_period: int = Field(3, ge=1, le=8)
    typical_orbits: int = Field(3, ge=1, le=20)
    orbits: Optional[list[list[float]]] = None
    n_orbits: int = Field(3, ge=1, le=50)
    references: list[ReferenceBlock] = Field(default_factory=list)
    convexlike: Optional[ConvexlikeBlock] = None
    large_deviation: LargeDeviationBlock = Field(default_factory=LargeDeviationBlock)
    feigenbaum_generations: list[int] = Field(default_factory=list)

    @field_validator("epsilons")
    @classmethod
    def _eps(cls, v):
        if not v or any(e <= 0 for e in v):
            raise ValueError("epsilons must be a non-empty list of positive numbers")
        return sorted(v, reverse=True)


class ExperimentConfig(Strict):
    name: str = "experiment"
    description: str = ""
    expected: str = ""
    commands: list[Literal["pomega", "observability", "decompose", "equilibrium"]] = Field(
        default_factory=lambda: ["pomega"])
    system: SystemBlock
    ensemble: EnsembleBlock = Field(default_factory=EnsembleBlock)
    metric: MetricBlock = Field(default_factory=MetricBlock)
    analysis: AnalysisBlock = Field(default_factory=AnalysisBlock)
    output: str = "out"

    @model_validator(mode="after")
    def _consistent(self):
        try:
            sysm = self.system.build()
        except (ObslabError, TypeError) as exc:
            raise ValueError(f"system: {exc}") from None
        if "equilibrium" in self.commands and not sysm.is_circle_expanding:
            raise ValueError("equilibrium needs an expanding circle map")
        if self.analysis.resolution is not None and len(self.analysis.resolution) != sysm.space.dimension:
            raise ValueError("resolution must have one entry per phase-space dimension")
        for ref in self.analysis.references:
            if ref.kind == "saddles" and self.system.family != "BowenSaddles":
                raise ValueError(f"reference {ref.name}: saddles need the BowenSaddles family")
            if ref.kind == "feigenbaum" and self.system.family != "QuadraticFeigenbaum":
                raise ValueError(f"reference {ref.name}: feigenbaum needs QuadraticFeigenbaum")
        names = [r.name for r in self.analysis.references]
        if len(set(names)) != len(names):
            raise ValueError("reference names must be unique")
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def validate(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return validate(data)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return resources.files("obslab.cli").joinpath("presets", f"{name}.yaml").read_text()


def preset(name: str) -> ExperimentConfig:
    return validate(yaml.safe_load(preset_text(name)))
