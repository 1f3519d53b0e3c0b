"""Experiment runner: executes estimator runs and writes reports.

Outputs are deterministic for a fixed (config, seed): JSON report floats
carry 17 significant digits, CSV floats 10, and wall time is kept off the
file artifacts (it is returned on the report object and printed by the
CLI).  Replica and sweep-point runs draw from independent generator
streams derived as SeedSequence(seed, spawn_key=(point, replica, stream))
with stream 0 for the plain estimator and 1 for the coupled one.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kmp as kmp_mod
from . import ssep as ssep_mod
from . import stats
from .config import ExperimentConfig
from .engine import (ConfigurationError, CoupledRunResult, EstimatorConfig,
                     SimpleRunResult, run_coupled, run_simple)

SIMPLE_STREAM = 0
COUPLED_STREAM = 1

SWEEP_CSV_COLUMNS = (
    "model", "N", "observable", "simple_est", "simple_se",
    "coupled_est", "coupled_se", "e_N", "e_N_se", "e_var", "e_tau",
    "rejection_rate", "seed",
)

BATCH_CSV_COLUMNS = ("observable", "estimator", "batch_index", "batch_mean")


def derive_rng(master_seed: int, point: int, replica: int,
               stream: int) -> np.random.Generator:
    """Independent generator for (sweep point, replica, estimator stream)."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(point, replica, stream))
    return np.random.default_rng(seq)


def _json_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value {x!r} cannot enter a report")
    return format(x, ".17g")


def _csv_float(x: float) -> str:
    return format(x, ".10g")


def dumps_canonical(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""

    def render(node: Any, level: int) -> str:
        pad = " " * (indent * level)
        pad_in = " " * (indent * (level + 1))
        if node is None:
            return "null"
        if isinstance(node, bool):
            return "true" if node else "false"
        if isinstance(node, int):
            return str(node)
        if isinstance(node, float):
            return _json_float(node)
        if isinstance(node, str):
            return json.dumps(node)
        if isinstance(node, (list, tuple)):
            if not node:
                return "[]"
            items = ",\n".join(pad_in + render(v, level + 1) for v in node)
            return "[\n" + items + "\n" + pad + "]"
        if isinstance(node, dict):
            if not node:
                return "{}"
            items = ",\n".join(
                f"{pad_in}{json.dumps(str(k))}: {render(v, level + 1)}"
                for k, v in node.items())
            return "{\n" + items + "\n" + pad + "}"
        raise TypeError(f"cannot serialize {type(node).__name__}")

    return render(obj, 0) + "\n"


def _build_model(config: ExperimentConfig, n: int):
    """Model, coupling, and product-approximation expectations for size n."""
    mp = config.model_params
    if config.model == "ssep":
        params = ssep_mod.SsepParams(n, mp["alpha"], mp["beta"],
                                     mp["delta"], mp["gamma"])
        model = ssep_mod.SsepModel(params)
        profile = ssep_mod.LocalEquilibriumProfile.from_params(params)
        coupling = ssep_mod.SsepCoupling(model, profile)
        lte = ssep_mod.lte_expectations
    else:
        params = kmp_mod.KmpParams(n, mp["t_left"], mp["t_right"])
        model = kmp_mod.KmpModel(params)
        profile = kmp_mod.TemperatureProfile.from_params(params)
        coupling = kmp_mod.KmpCoupling(model, profile)
        lte = kmp_mod.lte_expectations
    return model, coupling, profile, lte


def _estimator_config(config: ExperimentConfig) -> EstimatorConfig:
    return EstimatorConfig(
        alpha=config.alpha,
        use_mean_holding_times=config.use_mean_holding_times,
        burn_in_fraction=config.burn_in_fraction,
        n_batches=config.batches,
        acf_spacing=config.acf_spacing)


@dataclass
class ObservableReport:
    """Per-observable estimates and diagnostics of one point/replica run."""

    name: str
    eq_expectation: float
    simple_estimate: float | None = None
    simple_se: float | None = None
    coupled_estimate: float | None = None
    coupled_se: float | None = None
    x_mean: float | None = None
    y_mean: float | None = None
    e_n: float | None = None
    e_n_se: float | None = None
    e_var: float | None = None
    e_tau: float | None = None
    alpha_star: float | None = None
    alpha_residual: float | None = None
    tau_direct: float | None = None
    tau_couple_direct: float | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "eq_expectation": self.eq_expectation,
            "simple_estimate": self.simple_estimate,
            "simple_se": self.simple_se,
            "coupled_estimate": self.coupled_estimate,
            "coupled_se": self.coupled_se,
            "x_mean": self.x_mean,
            "y_mean": self.y_mean,
            "e_n": self.e_n,
            "e_n_se": self.e_n_se,
            "e_var": self.e_var,
            "e_tau": self.e_tau,
            "alpha_star": self.alpha_star,
            "alpha_residual": self.alpha_residual,
            "tau_direct": self.tau_direct,
            "tau_couple_direct": self.tau_couple_direct,
        }


@dataclass
class PointResult:
    """One (sweep point, replica) execution."""

    n: int
    point_index: int
    replica: int
    observables: list[ObservableReport]
    simple: SimpleRunResult | None
    coupled: CoupledRunResult | None

    def global_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.simple is not None:
            out["simple_jump_count"] = self.simple.jump_count
            out["simple_total_weight"] = self.simple.total_weight
        if self.coupled is not None:
            out["coupled_jump_count"] = self.coupled.jump_count
            out["coupled_total_weight"] = self.coupled.total_weight
            out["proposals"] = self.coupled.proposals
            out["rejections"] = self.coupled.rejections
            out["rejection_rate"] = self.coupled.rejection_rate
        return out

    def as_dict(self) -> dict[str, Any]:
        return {
            "point": self.point_index,
            "n": self.n,
            "replica": self.replica,
            "streams": {
                "simple": [self.point_index, self.replica, SIMPLE_STREAM],
                "coupled": [self.point_index, self.replica, COUPLED_STREAM],
            },
            "global": self.global_dict(),
            "observables": [o.as_dict() for o in self.observables],
        }


@dataclass
class RunReport:
    """In-memory result of run_experiment / run_sweep."""

    config: dict[str, Any]
    points: list[PointResult]
    wall_time: float = 0.0
    sweep_rows: list[dict[str, Any]] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"config": self.config,
                               "results": [p.as_dict() for p in self.points]}
        if self.sweep_rows:
            doc["sweep"] = self.sweep_rows
        return doc


def _direct_tau_or_none(series: np.ndarray, spacing: float) -> float | None:
    try:
        return stats.direct_tau(series, spacing).tau
    except ValueError:
        return None


def _observable_reports(config: ExperimentConfig,
                        eq: dict[str, float],
                        simple: SimpleRunResult | None,
                        coupled: CoupledRunResult | None) -> list[ObservableReport]:
    reports = []
    for name in eq:
        rep = ObservableReport(name=name, eq_expectation=eq[name])
        if simple is not None:
            rep.simple_estimate = simple.estimates[name]
            rep.simple_se = stats.batched_standard_error(
                stats.BatchedSeries(simple.batch_series(name), simple.batch_duration))
            if simple.grid_values is not None:
                rep.tau_direct = _direct_tau_or_none(
                    simple.grid_series(name), simple.grid_spacing)
        if coupled is not None:
            rep.coupled_estimate = coupled.estimates[name]
            rep.coupled_se = stats.batched_standard_error(
                stats.BatchedSeries(coupled.batch_series(name), coupled.batch_duration))
            rep.x_mean = coupled.x_means[name]
            rep.y_mean = coupled.y_means[name]
            try:
                rep.alpha_star, rep.alpha_residual = stats.optimal_alpha(
                    coupled.x_batch_series(name), coupled.y_batch_series(name))
            except ValueError:
                pass
            if coupled.x_grid_values is not None:
                rep.tau_couple_direct = _direct_tau_or_none(
                    coupled.diff_grid_series(name), coupled.grid_spacing)
        if simple is not None and coupled is not None and rep.simple_se > 0:
            rep.e_n = stats.error_ratio(rep.coupled_se, rep.simple_se)
            rep.e_n_se = stats.error_ratio_se(rep.e_n, config.batches, config.batches)
            var_phi = simple.variance(name)
            if var_phi > 0:
                rep.e_var = float(np.sqrt(coupled.diff_variance(name) / var_phi))
                if rep.e_var > 0:
                    rep.e_tau = rep.e_n / rep.e_var
        reports.append(rep)
    return reports


def run_point(config: ExperimentConfig, n: int, point_index: int,
              replica: int) -> PointResult:
    """Execute the configured estimators for one (point, replica)."""
    observables = config.resolved_observables(n)
    model, coupling, profile, lte = _build_model(config, n)
    eq = lte(profile, observables)
    est_cfg = _estimator_config(config)
    simple = None
    coupled = None
    if config.estimators in ("simple", "both"):
        rng = derive_rng(config.seed, point_index, replica, SIMPLE_STREAM)
        simple = run_simple(model, model.initial_state(), config.t_final,
                            observables, est_cfg, rng)
    if config.estimators in ("coupled", "both"):
        rng = derive_rng(config.seed, point_index, replica, COUPLED_STREAM)
        coupled = run_coupled(coupling, coupling.initial_state(), config.t_final,
                              observables, eq, est_cfg, rng)
    reports = _observable_reports(config, eq, simple, coupled)
    return PointResult(n=n, point_index=point_index, replica=replica,
                       observables=reports, simple=simple, coupled=coupled)


def _write_batch_csv(path: Path, point: PointResult) -> None:
    lines = [",".join(BATCH_CSV_COLUMNS)]
    for estimator, result in (("simple", point.simple), ("coupled", point.coupled)):
        if result is None:
            continue
        for name in result.names:
            series = result.batch_series(name)
            for b, mean in enumerate(series):
                lines.append(
                    f"{name},{estimator},{b},{_csv_float(float(mean))}")
    path.write_text("\n".join(lines) + "\n")


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run the configured estimators (all replicas) and write the report
    files: report.json plus one batch-means CSV per replica."""
    if config.sweep is not None:
        raise ConfigurationError(
            "config has a 'sweep' list; use run_sweep / the sweep command")
    start = time.perf_counter()
    points = [run_point(config, config.n, 0, replica)
              for replica in range(config.replicas)]
    report = RunReport(config=config.echo(), points=points)
    report.wall_time = time.perf_counter() - start

    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(dumps_canonical(report.as_dict()))
    report.paths.append(report_path)
    for point in points:
        csv_path = out_dir / f"batches_r{point.replica}.csv"
        _write_batch_csv(csv_path, point)
        report.paths.append(csv_path)
    return report


def _pooled_se(series_list: list[np.ndarray], batch_duration: float) -> float:
    pooled = np.concatenate(series_list)
    return stats.batched_standard_error(stats.BatchedSeries(pooled, batch_duration))


def _sweep_row(config: ExperimentConfig, n: int, name: str,
               replicas: list[PointResult]) -> dict[str, Any]:
    simple_batches = [p.simple.batch_series(name) for p in replicas]
    coupled_batches = [p.coupled.batch_series(name) for p in replicas]
    simple_se = _pooled_se(simple_batches, replicas[0].simple.batch_duration)
    coupled_se = _pooled_se(coupled_batches, replicas[0].coupled.batch_duration)
    n_eff = config.batches * len(replicas)
    e_n = stats.error_ratio(coupled_se, simple_se)
    var_phi = float(np.mean([p.simple.variance(name) for p in replicas]))
    var_diff = float(np.mean([p.coupled.diff_variance(name) for p in replicas]))
    e_var = float(np.sqrt(var_diff / var_phi)) if var_phi > 0 else None
    e_tau = e_n / e_var if e_var else None
    proposals = sum(p.coupled.proposals for p in replicas)
    rejections = sum(p.coupled.rejections for p in replicas)
    return {
        "model": config.model,
        "N": n,
        "observable": name,
        "simple_est": float(np.mean([p.simple.estimates[name] for p in replicas])),
        "simple_se": simple_se,
        "coupled_est": float(np.mean([p.coupled.estimates[name] for p in replicas])),
        "coupled_se": coupled_se,
        "e_N": e_n,
        "e_N_se": stats.error_ratio_se(e_n, n_eff, n_eff),
        "e_var": e_var,
        "e_tau": e_tau,
        "rejection_rate": rejections / proposals if proposals else 0.0,
        "seed": config.seed,
    }


def run_sweep(config: ExperimentConfig) -> RunReport:
    """Run every sweep point and write sweep.csv / sweep.json.

    Error ratios need both estimators, so sweeps require estimators =
    "both".  A failing point aborts the sweep naming its site count.
    """
    if config.sweep is None:
        raise ConfigurationError("sweep command needs a 'sweep' list in the config")
    if config.estimators != "both":
        raise ConfigurationError("sweep requires estimators = 'both'")
    start = time.perf_counter()
    all_points: list[PointResult] = []
    rows: list[dict[str, Any]] = []
    for point_index, n in enumerate(config.sweep):
        try:
            replicas = [run_point(config, n, point_index, r)
                        for r in range(config.replicas)]
        except Exception as exc:
            raise RuntimeError(f"sweep point N={n} failed: {exc}") from exc
        all_points.extend(replicas)
        for name in config.resolved_observables(n):
            rows.append(_sweep_row(config, n, name, replicas))
    report = RunReport(config=config.echo(), points=all_points, sweep_rows=rows)
    report.wall_time = time.perf_counter() - start

    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    lines = [",".join(SWEEP_CSV_COLUMNS)]
    for row in rows:
        cells = []
        for col in SWEEP_CSV_COLUMNS:
            value = row[col]
            if value is None:
                cells.append("")
            elif isinstance(value, float):
                cells.append(_csv_float(value))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n")
    report.paths.append(csv_path)
    json_path = out_dir / "sweep.json"
    json_path.write_text(dumps_canonical(report.as_dict()))
    report.paths.append(json_path)
    return report


def oracle_values(config: ExperimentConfig) -> dict[str, Any]:
    """Exact stationary expectations of the configured observables for the
    exclusion model at n <= 12, via the dense master-equation solve."""
    from . import oracle

    if config.model != "ssep":
        raise ConfigurationError("the oracle supports only the ssep model")
    n = config.n
    if n > oracle.MAX_SITES:
        raise ConfigurationError(
            f"the oracle is capped at n = {oracle.MAX_SITES} sites (got {n})")
    params = ssep_mod.SsepParams(n, config.model_params["alpha"],
                                 config.model_params["beta"],
                                 config.model_params["delta"],
                                 config.model_params["gamma"])
    generator = oracle.build_ssep_generator(params)
    stationary = oracle.stationary_distribution(generator)
    observables = config.resolved_observables(n)
    values = {name: oracle.exact_expectation(stationary, obs)
              for name, obs in observables.items()}
    return {
        "model": "ssep",
        "n": n,
        "residual": stationary.residual,
        "observables": values,
    }
