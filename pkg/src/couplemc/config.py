"""Experiment configuration: strict JSON parsing with documented defaults.

A config is a single JSON document.  Unknown keys are rejected by name.
Defaults: alpha = 1, batches = 32, burn_in_fraction = 0.1, replicas = 1,
estimators = "both", use_mean_holding_times = false, acf_spacing = null,
output = "couplemc_out".  Model parameters default to the standard
benchmark settings (exclusion process: alpha=2, beta=0.1, delta=0.3,
gamma=1; heat chain: t_left=10, t_right=100); only n is required.

Observable positions are fractional: a site at x maps to 1-based index
floor(x * n) clamped to [1, n]; pairs map both coordinates and must land on
distinct sites.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .engine import ConfigurationError
from .observables import PairObservable, SiteObservable

_SSEP_PARAM_DEFAULTS = {"alpha": 2.0, "beta": 0.1, "delta": 0.3, "gamma": 1.0}
_KMP_PARAM_DEFAULTS = {"t_left": 10.0, "t_right": 100.0}

ESTIMATOR_CHOICES = ("simple", "coupled", "both")


def _format_position(x: float) -> str:
    return format(x, "g")


@dataclass(frozen=True)
class ObservableSpec:
    """A site or pair observable given by fractional positions in (0, 1)."""

    kind: str
    x: float
    y: float | None = None

    def __post_init__(self):
        if self.kind not in ("site", "pair"):
            raise ConfigurationError(f"observable kind must be 'site' or 'pair', got {self.kind!r}")
        if not 0.0 < self.x < 1.0:
            raise ConfigurationError(f"observable position x={self.x} must lie in (0, 1)")
        if self.kind == "pair":
            if self.y is None:
                raise ConfigurationError(f"pair observable {self.name()} needs a 'y' position")
            if not 0.0 < self.y < 1.0:
                raise ConfigurationError(f"observable position y={self.y} must lie in (0, 1)")
        elif self.y is not None:
            raise ConfigurationError(f"site observable {self.name()} takes no 'y' position")

    def name(self) -> str:
        if self.kind == "site":
            return f"site({_format_position(self.x)})"
        if self.y is None:
            return f"pair({_format_position(self.x)},?)"
        return f"pair({_format_position(self.x)},{_format_position(self.y)})"

    def site_index(self, n: int) -> int:
        """0-based index of the site at fractional position x."""
        return min(max(int(self.x * n), 1), n) - 1

    def resolve(self, n: int):
        """Concrete observable for an n-site chain."""
        if self.kind == "site":
            return SiteObservable(self.site_index(n))
        i = self.site_index(n)
        j = min(max(int(self.y * n), 1), n) - 1
        if i == j:
            raise ConfigurationError(
                f"observable {self.name()}: positions map to the same site "
                f"index {i + 1} at n={n}")
        return PairObservable(i, j)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see module docstring for defaults)."""

    model: str
    model_params: dict[str, Any]
    t_final: float
    seed: int
    observables: tuple[ObservableSpec, ...]
    burn_in_fraction: float = 0.1
    alpha: float = 1.0
    estimators: str = "both"
    batches: int = 32
    sweep: tuple[int, ...] | None = None
    replicas: int = 1
    use_mean_holding_times: bool = False
    acf_spacing: float | None = None
    output: str = "couplemc_out"

    def __post_init__(self):
        if self.model not in ("ssep", "kmp"):
            raise ConfigurationError(f"model must be 'ssep' or 'kmp', got {self.model!r}")
        if not self.t_final > 0:
            raise ConfigurationError("t_final must be positive")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ConfigurationError("seed must be an integer in [0, 2^64)")
        if not self.observables:
            raise ConfigurationError("at least one observable is required")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigurationError("burn_in_fraction must lie in [0, 1)")
        if not math.isfinite(self.alpha):
            raise ConfigurationError("alpha must be finite")
        if self.estimators not in ESTIMATOR_CHOICES:
            raise ConfigurationError(
                f"estimators must be one of {', '.join(ESTIMATOR_CHOICES)}")
        if self.batches < 2:
            raise ConfigurationError("batches must be at least 2")
        if self.sweep is not None:
            if not self.sweep:
                raise ConfigurationError("sweep must be a nonempty list of site counts")
            if any((not isinstance(n, int)) or n < 1 for n in self.sweep):
                raise ConfigurationError("sweep entries must be positive integers")
        if self.replicas < 1:
            raise ConfigurationError("replicas must be at least 1")
        if self.acf_spacing is not None and not self.acf_spacing > 0:
            raise ConfigurationError("acf_spacing must be positive")
        # resolve observables at every site count to surface collisions early
        for n in self.site_counts():
            names = []
            for spec in self.observables:
                spec.resolve(n)
                names.append(spec.name())
            if len(set(names)) != len(names):
                raise ConfigurationError("duplicate observable specifications")

    @property
    def n(self) -> int:
        return self.model_params["n"]

    def site_counts(self) -> tuple[int, ...]:
        return self.sweep if self.sweep is not None else (self.n,)

    def observable_names(self) -> list[str]:
        return [spec.name() for spec in self.observables]

    def resolved_observables(self, n: int) -> dict[str, Any]:
        return {spec.name(): spec.resolve(n) for spec in self.observables}

    def echo(self) -> dict[str, Any]:
        """Canonical form of the config for reports (key order fixed)."""
        out: dict[str, Any] = {"model": self.model, "params": dict(self.model_params)}
        out["t_final"] = self.t_final
        out["seed"] = self.seed
        out["observables"] = [
            {"kind": s.kind, "x": s.x} | ({} if s.y is None else {"y": s.y})
            for s in self.observables
        ]
        out["burn_in_fraction"] = self.burn_in_fraction
        out["alpha"] = self.alpha
        out["estimators"] = self.estimators
        out["batches"] = self.batches
        out["sweep"] = list(self.sweep) if self.sweep is not None else None
        out["replicas"] = self.replicas
        out["use_mean_holding_times"] = self.use_mean_holding_times
        out["acf_spacing"] = self.acf_spacing
        out["output"] = self.output
        return out


def _require(mapping: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in mapping:
        raise ConfigurationError(f"missing required key '{key}' in {where}")
    return mapping[key]


def _check_number(value: Any, key: str, *, integer: bool = False) -> Any:
    ok = isinstance(value, int) if integer else (
        isinstance(value, (int, float)) and not isinstance(value, bool))
    if not ok or isinstance(value, bool):
        kind = "an integer" if integer else "a number"
        raise ConfigurationError(f"key '{key}' must be {kind}, got {value!r}")
    return value


def _parse_model_params(model: str, raw: Any) -> dict[str, Any]:
    if not isinstance(raw, dict):
        raise ConfigurationError("key 'params' must be an object")
    defaults = _SSEP_PARAM_DEFAULTS if model == "ssep" else _KMP_PARAM_DEFAULTS
    unknown = set(raw) - set(defaults) - {"n"}
    if unknown:
        raise ConfigurationError(f"unknown key '{sorted(unknown)[0]}' in params")
    n = _check_number(_require(raw, "n", "params"), "params.n", integer=True)
    if n < 1:
        raise ConfigurationError("params.n must be at least 1")
    out: dict[str, Any] = {"n": n}
    for key, default in defaults.items():
        value = raw.get(key, default)
        out[key] = float(_check_number(value, f"params.{key}"))
    return out


def _parse_observable(raw: Any, index: int) -> ObservableSpec:
    where = f"observables[{index}]"
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{where} must be an object")
    unknown = set(raw) - {"kind", "x", "y"}
    if unknown:
        raise ConfigurationError(f"unknown key '{sorted(unknown)[0]}' in {where}")
    kind = _require(raw, "kind", where)
    x = float(_check_number(_require(raw, "x", where), f"{where}.x"))
    y = raw.get("y")
    if y is not None:
        y = float(_check_number(y, f"{where}.y"))
    return ObservableSpec(kind=kind, x=x, y=y)


_TOP_LEVEL_KEYS = {
    "model", "params", "t_final", "seed", "observables", "burn_in_fraction",
    "alpha", "estimators", "batches", "sweep", "replicas",
    "use_mean_holding_times", "acf_spacing", "output",
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config (strict keys)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigurationError(f"unknown key '{sorted(unknown)[0]}' in config")

    model = _require(raw, "model", "config")
    if model not in ("ssep", "kmp"):
        raise ConfigurationError(f"model must be 'ssep' or 'kmp', got {model!r}")
    params = _parse_model_params(model, _require(raw, "params", "config"))
    t_final = float(_check_number(_require(raw, "t_final", "config"), "t_final"))
    seed = _check_number(_require(raw, "seed", "config"), "seed", integer=True)

    obs_raw = _require(raw, "observables", "config")
    if not isinstance(obs_raw, list) or not obs_raw:
        raise ConfigurationError("key 'observables' must be a nonempty list")
    observables = tuple(_parse_observable(o, i) for i, o in enumerate(obs_raw))

    kwargs: dict[str, Any] = {}
    if "burn_in_fraction" in raw:
        kwargs["burn_in_fraction"] = float(_check_number(raw["burn_in_fraction"], "burn_in_fraction"))
    if "alpha" in raw:
        kwargs["alpha"] = float(_check_number(raw["alpha"], "alpha"))
    if "estimators" in raw:
        if not isinstance(raw["estimators"], str):
            raise ConfigurationError("key 'estimators' must be a string")
        kwargs["estimators"] = raw["estimators"]
    if "batches" in raw:
        kwargs["batches"] = _check_number(raw["batches"], "batches", integer=True)
    if "sweep" in raw and raw["sweep"] is not None:
        if not isinstance(raw["sweep"], list):
            raise ConfigurationError("key 'sweep' must be a list")
        kwargs["sweep"] = tuple(raw["sweep"])
    if "replicas" in raw:
        kwargs["replicas"] = _check_number(raw["replicas"], "replicas", integer=True)
    if "use_mean_holding_times" in raw:
        if not isinstance(raw["use_mean_holding_times"], bool):
            raise ConfigurationError("key 'use_mean_holding_times' must be a boolean")
        kwargs["use_mean_holding_times"] = raw["use_mean_holding_times"]
    if "acf_spacing" in raw and raw["acf_spacing"] is not None:
        kwargs["acf_spacing"] = float(_check_number(raw["acf_spacing"], "acf_spacing"))
    if "output" in raw:
        if not isinstance(raw["output"], str):
            raise ConfigurationError("key 'output' must be a string")
        kwargs["output"] = raw["output"]

    return ExperimentConfig(
        model=model, model_params=params, t_final=t_final, seed=seed,
        observables=observables, **kwargs)


def load_config(path: str | Path, *, seed: int | None = None,
                t_final: float | None = None,
                output: str | None = None) -> ExperimentConfig:
    """Read a config file and apply command-line scalar overrides."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if t_final is not None:
        raw["t_final"] = t_final
    if output is not None:
        raw["output"] = output
    return parse_config(json.dumps(raw))
