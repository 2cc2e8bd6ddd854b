"""JSON run configurations, validated before any computation (unknown keys are rejected)."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from .partition import Partition, PartitionError, canonicalize
from .priors import REGIMES, AlphaModel


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


Labels = list[int]


def _partition(labels: Labels) -> Partition:
    return canonicalize(labels)


class AlphaOverride(_Strict):
    """Replace hyperparameters (or fixed values) on a subset of 1-based units and times."""

    units: list[int] = Field(min_length=1)
    times: Optional[list[int]] = None
    a: Optional[float] = Field(default=None, gt=0)
    b: Optional[float] = Field(default=None, gt=0)
    value: Optional[float] = Field(default=None, ge=0, le=1)


class AlphaConfig(_Strict):
    regime: Literal["global", "time-local", "unit-local", "time-unit-local"] = "global"
    fixed: bool = False
    value: Union[float, list[float]] = 0.5
    a: Union[float, list[float]] = 1.0
    b: Union[float, list[float]] = 1.0
    overrides: list[AlphaOverride] = []

    def build(self, T: int, m: int) -> AlphaModel:
        am = AlphaModel(self.regime, T, m, self.a, self.b, self.value, self.fixed)
        if not self.overrides:
            return am
        idx = am.block_index()
        a, b, v = am.a.copy(), am.b.copy(), am.values.copy()
        for ov in self.overrides:
            units = np.asarray(ov.units) - 1
            times = np.asarray(ov.times if ov.times is not None else range(1, T + 1)) - 1
            if units.min() < 0 or units.max() >= m or times.min() < 0 or times.max() >= T:
                raise ValueError(f"alpha override refers to units/times outside 1..{m} / 1..{T}")
            blocks = np.unique(idx[np.ix_(times, units)])
            if self.regime in ("global", "time-local") and len(blocks):
                raise ValueError(f"unit overrides need a unit-resolved alpha regime, not {self.regime!r}")
            if ov.a is not None:
                a[blocks] = ov.a
            if ov.b is not None:
                b[blocks] = ov.b
            if ov.value is not None:
                v[blocks] = ov.value
        return AlphaModel(self.regime, T, m, a, b, v, self.fixed)


class PriorConfig(_Strict):
    """A partition prior. With T > 1, ``icrp`` and ``crp`` become sequence models."""

    type: Literal["crp", "icrp", "cpp", "lsp"]
    rho0: Optional[Labels] = None
    M: float = Field(default=1.0, gt=0)
    alpha: AlphaConfig = AlphaConfig()
    psi: Optional[float] = Field(default=None, ge=0)
    nu: Optional[float] = Field(default=None, gt=0)
    dependence: Literal["markovian", "conditionally-independent"] = "markovian"

    @model_validator(mode="after")
    def _check(self):
        if self.type in ("icrp", "cpp", "lsp") and self.rho0 is None:
            raise ValueError(f"prior type {self.type!r} needs rho0")
        if self.type == "cpp" and self.psi is None:
            raise ValueError("cpp prior needs psi")
        if self.type == "lsp" and self.nu is None:
            raise ValueError("lsp prior needs nu")
        return self

    def build(self, T: int = 1, m: Optional[int] = None):
        from .priors import CPPPrior, CRPPrior, ICRPPrior, LSPPrior
        from .temporal import SequenceModel

        rho0 = _partition(self.rho0) if self.rho0 is not None else None
        if m is None:
            if rho0 is None:
                raise PartitionError("number of units is unknown")
            m = rho0.m
        if rho0 is not None and rho0.m != m:
            raise PartitionError(f"rho0 covers {rho0.m} units but the data have {m}")
        if self.type in ("cpp", "lsp"):
            if T != 1:
                raise ValueError(f"{self.type} prior is only available for a single time point")
            return CPPPrior(rho0, self.psi, self.M) if self.type == "cpp" else LSPPrior(rho0, self.nu)
        if T == 1 and self.type == "crp":
            return CRPPrior(self.M)
        alpha = self.alpha.build(T, m)
        if T == 1:
            return ICRPPrior(rho0, alpha, self.M)
        return SequenceModel(self.dependence, rho0, alpha, self.M)


class HyperConfig(_Strict):
    A_sigma: Optional[float] = Field(default=None, gt=0)
    A_tau: float = Field(default=100.0, gt=0)
    A_lambda: float = Field(default=5.0, gt=0)
    m0: float = 0.0
    s02: float = Field(default=1e4, gt=0)
    sigma: Optional[float] = Field(default=None, gt=0)
    theta: Optional[float] = None
    tau2: Optional[float] = Field(default=None, gt=0)
    likelihood: Literal["gaussian", "flat"] = "gaussian"

    def build(self):
        from .likelihood import Hyperparams

        return Hyperparams(**self.model_dump())


class McmcSettings(_Strict):
    iters: int = Field(default=11000, ge=1)
    burnin: int = Field(default=1000, ge=0)
    thin: int = Field(default=10, ge=1)
    n_aux: int = Field(default=3, ge=1)
    chains: int = Field(default=1, ge=1)

    def build(self, seed: int):
        from .mcmc import McmcConfig

        return McmcConfig(seed=seed, **self.model_dump())


class DataConfig(_Strict):
    """Either a CSV path (relative to the config file) or a synthetic generator."""

    path: Optional[str] = None
    format: Literal["auto", "long", "wide"] = "auto"
    generator: Optional[Literal["mixture", "spatial-panel"]] = None
    h: float = 3.0
    m: int = Field(default=100, ge=2)
    sd: float = Field(default=0.5, gt=0)
    T: int = Field(default=12, ge=1)
    regions: int = Field(default=9, ge=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.generator is None):
            raise ValueError("data needs exactly one of 'path' or 'generator'")
        return self


class _Run(_Strict):
    seed: int = Field(default=0, ge=0)
    _base_dir: Optional[str] = PrivateAttr(default=None)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() or self._base_dir is None else Path(self._base_dir) / q


class EnumerateConfig(_Run):
    command: Literal["enumerate"] = "enumerate"
    prior: Literal["crp", "icrp", "cpp", "lsp"]
    m: Optional[int] = Field(default=None, ge=1)
    rho0: Optional[Labels] = None
    M: float = Field(default=1.0, gt=0)
    grid: list[float] = []
    alpha_per_unit: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.prior != "crp" and self.rho0 is None:
            raise ValueError(f"{self.prior} enumeration needs rho0")
        if self.m is None:
            if self.rho0 is None:
                raise ValueError("enumeration needs m or rho0")
            self.m = len(self.rho0)
        if self.rho0 is not None and len(self.rho0) != self.m:
            raise ValueError("rho0 length differs from m")
        if self.prior == "icrp" and any(not 0 <= g <= 1 for g in self.grid):
            raise ValueError("iCRP grid values are alpha values in [0, 1]")
        if self.prior == "lsp" and any(g <= 0 for g in self.grid):
            raise ValueError("LSP grid values are positive scales nu")
        if self.prior == "cpp" and any(g < 0 for g in self.grid):
            raise ValueError("CPP grid values are penalties psi >= 0")
        if not self.grid and self.alpha_per_unit is None:
            raise ValueError("enumeration needs a nonempty grid (or alpha_per_unit rows)")
        if self.alpha_per_unit is not None:
            if self.prior != "icrp":
                raise ValueError("alpha_per_unit applies to the icrp prior")
            if any(len(r) != self.m for r in self.alpha_per_unit):
                raise ValueError("each alpha_per_unit row needs one value per unit")
        return self


class PriorSimConfig(_Run):
    command: Literal["prior-sim"] = "prior-sim"
    replicates: int = Field(ge=1)
    T: int = Field(ge=1)
    rho0: Optional[Labels] = None
    m: Optional[int] = Field(default=None, ge=1)
    M: float = Field(default=1.0, gt=0)
    dependence: Literal["markovian", "conditionally-independent"] = "markovian"
    alpha: AlphaConfig = AlphaConfig()

    @model_validator(mode="after")
    def _check(self):
        if self.m is None:
            if self.rho0 is None:
                raise ValueError("prior-sim needs m or rho0")
            self.m = len(self.rho0)
        if self.rho0 is not None and len(self.rho0) != self.m:
            raise ValueError("rho0 length differs from m")
        return self

    def build(self):
        from .temporal import SequenceModel

        rho0 = _partition(self.rho0) if self.rho0 is not None else None
        return SequenceModel(self.dependence, rho0, self.alpha.build(self.T, self.m), self.M)


class FitConfig(_Run):
    command: Literal["fit"] = "fit"
    data: DataConfig
    prior: PriorConfig
    hyper: HyperConfig = HyperConfig()
    mcmc: McmcSettings = McmcSettings()
    references: dict[str, Labels] = {}


class PriorGrid(_Strict):
    type: Literal["crp", "icrp", "cpp", "lsp"]
    values: list[Union[float, Literal["1/(m log m)", "0.1/(m log m)"]]] = [0.0]

    def numeric(self, m: int) -> list[float]:
        out = []
        for v in self.values:
            if v == "1/(m log m)":
                v = 1.0 / (m * np.log(m))
            elif v == "0.1/(m log m)":
                v = 0.1 / (m * np.log(m))
            out.append(float(v))
        return out


class CompareConfig(_Run):
    command: Literal["compare-priors"] = "compare-priors"
    priors: list[PriorGrid] = Field(min_length=1)
    rho0: list[Literal["true", "merge", "split"]] = ["true", "merge", "split"]
    h: list[float] = [1.0, 2.0, 3.0]
    replicates: int = Field(default=10, ge=1)
    m: int = Field(default=100, ge=8)
    sd: float = Field(default=0.5, gt=0)
    hyper: HyperConfig = HyperConfig()
    mcmc: McmcSettings = McmcSettings()

    @field_validator("m")
    @classmethod
    def _m4(cls, v):
        if v % 4:
            raise ValueError("m must be a multiple of 4 so the four true clusters have equal size")
        return v


COMMANDS = {
    "enumerate": EnumerateConfig,
    "prior-sim": PriorSimConfig,
    "fit": FitConfig,
    "compare-priors": CompareConfig,
}


def load_config(command: str, payload: dict, base_dir: Optional[str] = None):
    payload = dict(payload)
    declared = payload.get("command", command)
    if declared != command:
        raise ValueError(f"config is for {declared!r} but the {command!r} subcommand was invoked")
    payload["command"] = command
    cfg = COMMANDS[command].model_validate(payload)
    cfg._base_dir = base_dir
    return cfg
