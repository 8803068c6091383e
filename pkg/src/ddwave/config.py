"""Experiment configuration: a YAML file validated against a strict schema.

Key names carry their units (``T0_s``, ``fs_hz``, ``snr_db`` ...). Validation
errors are reported as ``path:line: dotted.key: message`` and raised as
:class:`ConfigError`. Physical consistency (even sample count, harmonic
count within limits) is checked for every system the sweep will build
before any computation starts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .estimator import EstimatorConfig
from .exceptions import ConfigError
from .signal_model import ParamPrior, SystemConfig

__all__ = [
    "ExperimentConfig",
    "SystemSection",
    "PriorSection",
    "QuadratureSection",
    "EstimatorSection",
    "SweepSection",
    "SpectrumSection",
    "SweepCase",
    "load_config",
    "parse_config",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSection(_Section):
    T0_s: float = Field(gt=0, description="signal period [s]")
    fs_hz: float = Field(gt=0, description="sampling rate [Hz]")
    B_hz: float = Field(gt=0, description="two-sided bandwidth [Hz]")
    N0_w_per_hz: float = Field(1e-9, ge=0, description="noise PSD [W/Hz]; replaced per SNR point")
    P_w: float = Field(1.0, gt=0, description="transmit power [W]")
    gamma_re: float = 1.0
    gamma_im: float = 0.0

    @model_validator(mode="after")
    def _gain(self):
        if self.gamma_re == 0 and self.gamma_im == 0:
            raise ValueError("channel gain must be nonzero")
        return self


class PriorSection(_Section):
    sigma_tau_s: float = Field(gt=0)
    sigma_nu_hz: float = Field(gt=0)


class QuadratureSection(_Section):
    order: int = Field(10, ge=1, le=200)


class EstimatorSection(_Section):
    tau_span_sigma: float = Field(4.0, gt=0)
    nu_span_sigma: float = Field(4.0, gt=0)
    tau_points: int = Field(61, ge=2)
    nu_points: int = Field(61, ge=2)
    refine_iterations: int = Field(6, ge=0)
    contraction: float = Field(5.0, gt=1)


class SweepSection(_Section):
    mode: Literal["none", "rho", "kappa"] = "none"
    values: list[float] = Field(default_factory=list)
    alpha_points: int = Field(21, ge=2)
    snr_db: Optional[list[float]] = None
    trials: int = Field(2000, ge=1)

    @field_validator("values")
    @classmethod
    def _positive(cls, values):
        if any(not v > 0 for v in values):
            raise ValueError("sweep values must be positive")
        return values

    @field_validator("snr_db")
    @classmethod
    def _non_empty(cls, values):
        if values is not None and not values:
            raise ValueError("SNR list must not be empty")
        return values

    @model_validator(mode="after")
    def _values_match_mode(self):
        if self.mode == "none" and self.values:
            raise ValueError("values given but mode is 'none'")
        if self.mode != "none" and not self.values:
            raise ValueError(f"mode {self.mode!r} needs a non-empty values list")
        return self


class SpectrumSection(_Section):
    source: Literal["reference", "optimized", "zero", "file"] = "optimized"
    path: Optional[str] = None
    alpha: Optional[float] = Field(None, ge=0, le=1)
    weighting: Optional[list[list[float]]] = None
    selection: Literal["robust_maximin", "maximin", "equal_weight", "max_distance", "max_distance_positive"] = (
        "robust_maximin"
    )
    reference_shape: Literal["chips", "flat"] = "chips"

    @model_validator(mode="after")
    def _consistent(self):
        if self.source == "file" and not self.path:
            raise ValueError("source 'file' needs a path")
        if self.alpha is not None and self.weighting is not None:
            raise ValueError("give either alpha or weighting, not both")
        if self.weighting is not None and (len(self.weighting) != 2 or any(len(r) != 2 for r in self.weighting)):
            raise ValueError("weighting must be a 2x2 nested list")
        return self


class ExperimentConfig(_Section):
    system: SystemSection
    prior: PriorSection
    quadrature: QuadratureSection = QuadratureSection()
    estimator: EstimatorSection = EstimatorSection()
    sweep: SweepSection = SweepSection()
    spectrum: SpectrumSection = SpectrumSection()
    seed: int = Field(0, ge=0, lt=2**64)
    output: str = "results"

    @property
    def param_prior(self) -> ParamPrior:
        return ParamPrior(self.prior.sigma_tau_s, self.prior.sigma_nu_hz)

    @property
    def estimator_config(self) -> EstimatorConfig:
        e = self.estimator
        return EstimatorConfig(
            e.tau_span_sigma, e.nu_span_sigma, e.tau_points, e.nu_points, e.refine_iterations, e.contraction
        )

    def cases(self) -> list["SweepCase"]:
        """One (system, reference system) pair per sweep value."""
        s = self.system
        gamma = complex(s.gamma_re, s.gamma_im)

        def build(fs, B):
            return SystemConfig(T0=s.T0_s, fs=fs, B=B, N0=s.N0_w_per_hz, P=s.P_w, gamma=gamma)

        if self.sweep.mode == "rho":
            # fixed sampling rate, bandwidth B = rho * fs, reference at B = fs
            return [SweepCase(v, build(s.fs_hz, v * s.fs_hz), build(s.fs_hz, s.fs_hz)) for v in self.sweep.values]
        if self.sweep.mode == "kappa":
            # fixed bandwidth, sampling rate fs = B / kappa, reference sampled at fs = B
            return [SweepCase(v, build(s.B_hz / v, s.B_hz), build(s.B_hz, s.B_hz)) for v in self.sweep.values]
        return [SweepCase(None, build(s.fs_hz, s.B_hz), build(s.fs_hz, s.fs_hz))]


@dataclass(frozen=True)
class SweepCase:
    value: Optional[float]
    system: SystemConfig
    reference: SystemConfig


def _node_line(root: yaml.Node | None, loc: tuple) -> int | None:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    node = root
    line = None if node is None else node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    # report the key itself for leaf errors
                    line = k.start_mark.line + 1
                    node = v
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _format_error(source: str, root, loc: tuple, message: str) -> str:
    line = _node_line(root, loc)
    where = f"{source}:{line}" if line is not None else source
    dotted = ".".join(str(part) for part in loc) or "<root>"
    return f"{where}: {dotted}: {message}"


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate YAML text; raise :class:`ConfigError` on any problem."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of sections")

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = [_format_error(source, root, tuple(err["loc"]), err["msg"]) for err in exc.errors()]
        raise ConfigError("\n".join(lines)) from None

    _check_physical(config, source, root)
    return config


def _check_physical(config: ExperimentConfig, source: str, root) -> None:
    try:
        config.cases()
    except ConfigError as exc:
        loc = ("sweep", "values") if config.sweep.mode != "none" else ("system",)
        raise ConfigError(_format_error(source, root, loc, str(exc))) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
