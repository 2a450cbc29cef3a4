"""Scenario configuration: per-scenario defaults layered under JSON files and command-line overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigurationError
from ..gpc import RandomParamSpec
from ..kernels import KernelSpec
from .initial import InitialDistribution

SCENARIOS = ("homogeneous", "cs1d", "cs2d", "epsilon_scan", "tau_scan", "n_scan", "p_scan", "dt_scan")


@dataclass
class ScenarioConfig:
    scenario: str = "homogeneous"
    N: int = 10_000
    p: int = 2
    tau: float = 1e-2
    T: float = 0.5
    K: int = 3
    dim: int = 1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    param: RandomParamSpec = field(default_factory=RandomParamSpec)
    initial: InitialDistribution = field(default_factory=lambda: InitialDistribution("bimodal1d_v"))
    seed: int | None = None
    n_replicates: int = 1
    q_order: int | None = None  # defaults to K + 3
    # velocity grid of the homogeneous reference, and phase-space histogram grid
    grid: dict = field(default_factory=lambda: {"low": -3.0, "high": 3.0, "dv": 1e-2, "cells": 100})
    snapshot_times: tuple = ()
    # fixed parameter value for plain particle runs with a random kernel (default: mean of the law)
    theta: float | None = None
    output_dir: str | None = None
    workers: int = 1
    # scan lists
    n_values: tuple = (32, 64, 128, 256, 512)
    p_values: tuple = (2, 4, 8, 16)
    dt_values: tuple = (4e-2, 2e-2, 1e-2, 5e-3)
    reference_dt: float = 1e-2
    # epsilon scan
    k_steps: int = 3
    trials: int = 100_000
    # tau scan
    taus: tuple = (0.2, 0.1, 0.05, 0.025)
    pool_size: int = 4096
    n_ref: int = 8192
    w2_cap: int = 4096

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec.from_dict(self.kernel)
        if isinstance(self.param, dict):
            self.param = RandomParamSpec(**self.param)
        if isinstance(self.initial, dict):
            self.initial = InitialDistribution.from_dict(self.initial)
        for name in ("snapshot_times", "n_values", "p_values", "dt_values", "taus"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.p < 2 or self.N < 2:
            raise ConfigurationError("need N >= 2 and p >= 2")
        if self.N % self.p:
            raise ConfigurationError(f"p={self.p} does not divide N={self.N}")
        if self.tau <= 0 or self.T < 0:
            raise ConfigurationError("need tau > 0 and T >= 0")
        if self.K < 0 or self.n_replicates < 1 or self.workers < 1:
            raise ConfigurationError("need K >= 0, n_replicates >= 1 and workers >= 1")
        self.initial.check_dim(self.dim)

    @property
    def quadrature_order(self) -> int:
        return self.q_order if self.q_order is not None else self.K + 3

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if hasattr(val, "to_dict"):
                val = val.to_dict()
            elif f.name == "param":
                val = asdict(val)
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig(**d)


def scenario_defaults(scenario: str) -> dict:
    """Parameter sets of the reference experiments."""
    homogeneous_kernel = {"family": "constant", "kappa": 1.0, "level": 0.5, "level_slope": 0.01, "psi0": 0.5, "psiM": 0.51}
    stochastic_kernel = {"family": "inverse-power", "kappa": 1.0, "gamma_base": 0.1, "gamma_slope": 0.05, "psi0": 0.01}
    base = {
        "homogeneous": dict(
            N=10_000, T=0.5, K=3, dim=1, kernel=homogeneous_kernel, param={"a": 0.0, "b": 1.0},
            initial={"family": "bimodal1d_v"}, snapshot_times=(0.0, 0.1, 0.25, 0.5),
        ),
        "cs1d": dict(
            N=10_000, T=4.0, K=3, dim=1, kernel=stochastic_kernel, param={"a": -1.0, "b": 1.0},
            initial={"family": "bivariate_bimodal"}, snapshot_times=(0.0, 1.0, 2.0, 3.0, 4.0),
        ),
        "cs2d": dict(
            N=10_000, T=4.0, K=3, dim=2, kernel=stochastic_kernel, param={"a": -1.0, "b": 1.0},
            initial={"family": "annulus2d"}, snapshot_times=(0.0, 1.0, 2.0, 3.0, 4.0),
        ),
        "epsilon_scan": dict(N=512, n_values=(64, 128, 256, 512), k_steps=3, trials=100_000),
        "tau_scan": dict(
            N=8192, T=1.0, dim=1, kernel={"family": "inverse-power", "kappa": 2.0, "gamma_base": 1.0, "psi0": 0.01},
            initial={"family": "bivariate_bimodal"}, n_replicates=4, reference_dt=0.05,
        ),
    }
    scan = dict(
        N=256, T=0.5, K=3, dim=1, kernel=homogeneous_kernel, param={"a": 0.0, "b": 1.0},
        initial={"family": "bimodal1d_v"}, n_replicates=100,
    )
    base["n_scan"] = dict(scan)
    base["p_scan"] = dict(scan)
    base["dt_scan"] = dict(scan)
    if scenario not in base:
        raise ConfigurationError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    return copy.deepcopy(base[scenario])


def parse_override(item: str):
    """``key=value`` with the value parsed as JSON when possible, else kept as a string."""
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _set_nested(d: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigurationError(f"cannot set {dotted}: {k} is not a table")
    cur[keys[-1]] = value


def load_config(path=None, scenario=None, overrides=(), **explicit) -> ScenarioConfig:
    """Resolve defaults < file < ``key=value`` overrides < explicit keyword values."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
    scen = explicit.get("scenario") or scenario or data.get("scenario") or "homogeneous"
    merged = scenario_defaults(scen)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    for item in overrides:
        _set_nested(merged, *parse_override(item))
    merged.update({k: v for k, v in explicit.items() if v is not None})
    merged["scenario"] = scen
    valid = {f.name for f in fields(ScenarioConfig)}
    unknown = set(merged) - valid
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ScenarioConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
