"""Experiment harness: JSON-configured closed-loop runs, horizon/sample-count
sweeps, per-step CSV and summary JSON artifacts, and a post-hoc log validator.

All simulation content in the per-step CSV (states, inputs, costs, counters)
is reproducible byte for byte for a fixed seed, independent of the lane
count; the elapsed_ms column is wall-clock measurement and is excluded from
reproducibility comparisons.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import complexity
from .core import Plan
from .errors import ConfigError, SampledNmpcError
from .models import Benchmark, PLANT_IDS, make_benchmark
from .sampling import SamplerConfig
from .solver import RunLog, SolverConfig, closed_loop

__all__ = [
    "ExperimentConfig",
    "RunArtifacts",
    "SCHEMA_VERSION",
    "OUTPUT_ROOT_ENV",
    "run_experiment",
    "sweep",
    "validate_run",
    "resolve_output_root",
]

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "SAMPLED_NMPC_OUT"

CSV_FLOAT_FORMAT = ".17g"  # enough digits to round-trip doubles exactly

_CONFIG_KEYS = {
    "schema_version", "config_id", "plant", "horizon", "samples_per_step",
    "sampler", "lanes", "steps", "initial_state", "time_budget_ms", "pruning",
    "oracle_budget", "warm_start_mode", "improve_initial", "initial_plan",
    "model_overrides", "repeats", "out_dir",
}
_SAMPLER_KEYS = {"scheme", "seed", "skip", "warp_power", "warp_anchor"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One closed-loop experiment, loadable from and dumpable to JSON."""

    config_id: str
    plant: str
    horizon: int
    steps: int
    samples_per_step: int | tuple[int, ...] = 10
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lanes: int = 1
    initial_state: Optional[tuple[float, ...]] = None
    time_budget_ms: Optional[float] = None
    pruning: bool = True
    oracle_budget: int = 100_000
    warm_start_mode: Optional[str] = None
    improve_initial: bool = True
    initial_plan: Optional[tuple[tuple[float, ...], ...]] = None
    model_overrides: dict = field(default_factory=dict)
    repeats: int = 1
    out_dir: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not self.config_id:
            raise ConfigError("config_id must be nonempty")
        if self.plant not in PLANT_IDS:
            raise ConfigError(f"plant must be one of {PLANT_IDS}, got {self.plant!r}")
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not isinstance(self.samples_per_step, int):
            object.__setattr__(self, "samples_per_step",
                               tuple(int(c) for c in self.samples_per_step))
        if self.initial_state is not None:
            object.__setattr__(self, "initial_state",
                               tuple(float(v) for v in self.initial_state))
        if self.initial_plan is not None:
            object.__setattr__(self, "initial_plan",
                               tuple(tuple(float(v) for v in row) for row in self.initial_plan))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"config_id", "plant", "horizon", "steps"} - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        data = dict(raw)
        sampler_raw = data.pop("sampler", {})
        unknown = set(sampler_raw) - _SAMPLER_KEYS
        if unknown:
            raise ConfigError(f"unknown sampler keys: {sorted(unknown)}")
        if sampler_raw.get("warp_anchor") is not None:
            sampler_raw["warp_anchor"] = tuple(sampler_raw["warp_anchor"])
        try:
            sampler = SamplerConfig(**sampler_raw)
            return cls(sampler=sampler, **data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        data = asdict(self)
        sampler = data.pop("sampler")
        if sampler["warp_anchor"] is not None:
            sampler["warp_anchor"] = list(sampler["warp_anchor"])
        data["sampler"] = sampler
        if not isinstance(self.samples_per_step, int):
            data["samples_per_step"] = list(self.samples_per_step)
        if self.initial_state is not None:
            data["initial_state"] = list(self.initial_state)
        if self.initial_plan is not None:
            data["initial_plan"] = [list(row) for row in self.initial_plan]
        return data

    def with_overrides(self, seed: Optional[int] = None, lanes: Optional[int] = None,
                       budget_ms: Optional[float] = None,
                       pruning: Optional[bool] = None) -> "ExperimentConfig":
        """Apply command-line overrides, returning a new config."""
        updates: dict = {}
        if seed is not None:
            sampler = asdict(self.sampler)
            sampler["seed"] = seed
            if sampler["warp_anchor"] is not None:
                sampler["warp_anchor"] = tuple(sampler["warp_anchor"])
            updates["sampler"] = SamplerConfig(**sampler)
        if lanes is not None:
            updates["lanes"] = lanes
        if budget_ms is not None:
            updates["time_budget_ms"] = budget_ms
        if pruning is not None:
            updates["pruning"] = pruning
        if not updates:
            return self
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(updates)
        return ExperimentConfig(**current)


@dataclass(frozen=True)
class RunArtifacts:
    """File paths produced by one experiment run."""

    run_dir: Path
    csv_path: Path
    summary_path: Path
    resolved_config_path: Path


def resolve_output_root(cli_out: Optional[str], config: ExperimentConfig) -> Path:
    if cli_out:
        return Path(cli_out)
    if config.out_dir:
        return Path(config.out_dir)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    if env:
        return Path(env)
    return Path("runs")


def _assemble(config: ExperimentConfig) -> tuple[Benchmark, SolverConfig, np.ndarray]:
    bench = make_benchmark(config.plant, config.horizon, config.model_overrides)
    mode = config.warm_start_mode or bench.default_warm_start_mode
    initial_plan = None
    if config.initial_plan is not None:
        initial_plan = Plan(np.asarray(config.initial_plan, dtype=np.float64))
    try:
        solver_cfg = SolverConfig(
            horizon=config.horizon,
            samples_per_step=config.samples_per_step,
            sampler=config.sampler,
            lanes=config.lanes,
            time_budget=None if config.time_budget_ms is None else config.time_budget_ms / 1e3,
            pruning=config.pruning,
            oracle_budget=config.oracle_budget,
            warm_start_mode=mode,
            improve_initial=config.improve_initial,
            initial_plan=initial_plan,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    x0 = np.asarray(config.initial_state if config.initial_state is not None
                    else bench.default_x0, dtype=np.float64)
    if x0.shape != (bench.model.n,):
        raise ConfigError(f"initial_state must have length {bench.model.n}")
    return bench, solver_cfg, x0


def _fmt(value: float) -> str:
    return format(float(value), CSV_FLOAT_FORMAT)


def _write_step_csv(path: Path, log: RunLog, n: int, m: int) -> None:
    header = (["k"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
              + ["J_sub", "f_evals", "cost_evals", "elapsed_ms", "budget_hit"])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in log.records:
            row = ([str(rec.k)] + [_fmt(v) for v in rec.state]
                   + [_fmt(v) for v in rec.applied_input]
                   + [_fmt(rec.j_sub), str(rec.f_evals), str(rec.cost_evals),
                      _fmt(rec.elapsed * 1e3), str(int(rec.budget_hit))])
            writer.writerow(row)


def _summarize(config: ExperimentConfig, bench: Benchmark, solver_cfg: SolverConfig,
               log: RunLog, elapsed_ms_runs: list[float]) -> dict:
    n_list = list(solver_cfg.sample_counts)
    unit_model = complexity.CostModel()
    report = complexity.complexity_report(n_list, config.horizon, unit_model,
                                          solver_cfg.lanes)
    recs = log.records
    per_solve = {
        "f_evals_min": min((r.f_evals for r in recs), default=0),
        "f_evals_max": max((r.f_evals for r in recs), default=0),
        "cost_evals_min": min((r.cost_evals for r in recs), default=0),
        "cost_evals_max": max((r.cost_evals for r in recs), default=0),
        "elapsed_ms_median": statistics.median([r.elapsed * 1e3 for r in recs]) if recs else 0.0,
    }
    return {
        "config_id": config.config_id,
        "plant": config.plant,
        "horizon": config.horizon,
        "samples_per_step": n_list,
        "steps_completed": len(recs),
        "termination": log.termination,
        "final_state": [float(v) for v in log.states[-1]],
        "final_j_sub": recs[-1].j_sub if recs else None,
        "totals": {
            "f_evals": sum(r.f_evals for r in recs),
            "cost_evals": sum(r.cost_evals for r in recs),
            "improvements": sum(r.improvements for r in recs),
            "elapsed_ms": statistics.median(elapsed_ms_runs),
        },
        "per_solve": per_solve,
        "complexity": {
            "units": unit_model.units,
            "c1": unit_model.c1,
            "c2": unit_model.c2,
            "serial_exact": report.serial_exact,
            "serial_bound": report.serial_bound,
            "full_parallel": report.full_parallel,
            "p_parallel": report.p_parallel,
            "predicted_f_evals_per_solve": report.predicted_f_evals,
            "predicted_cost_evals_per_solve": report.predicted_cost_evals,
        },
        "timing_repeats": config.repeats,
    }


def run_experiment(config: ExperimentConfig, out_root: Optional[str] = None) -> RunArtifacts:
    """Execute one configured closed loop and write its artifacts.

    The run directory is <output root>/<config_id>.  On infeasibility or
    oracle failure a machine-readable error.json lands there and the error
    propagates to the caller.
    """
    bench, solver_cfg, x0 = _assemble(config)
    run_dir = resolve_output_root(out_root, config) / config.config_id
    run_dir.mkdir(parents=True, exist_ok=True)

    resolved = config.to_dict()
    resolved["resolved"] = {
        "warm_start_mode": solver_cfg.warm_start_mode,
        "initial_state": [float(v) for v in x0],
        "samples_per_step": list(solver_cfg.sample_counts),
        "output_root": str(resolve_output_root(out_root, config)),
    }
    resolved_path = run_dir / "config.resolved.json"
    resolved_path.write_text(json.dumps(resolved, indent=2) + "\n")

    try:
        log = closed_loop(bench.model, bench.constraints, bench.cost,
                          solver_cfg, x0, config.steps)
        elapsed_ms_runs = [sum(r.elapsed for r in log.records) * 1e3]
        for _ in range(config.repeats - 1):
            extra = closed_loop(bench.model, bench.constraints, bench.cost,
                                solver_cfg, x0, config.steps)
            elapsed_ms_runs.append(sum(r.elapsed for r in extra.records) * 1e3)
    except SampledNmpcError as exc:
        (run_dir / "error.json").write_text(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
            "config_id": config.config_id,
        }, indent=2) + "\n")
        raise

    csv_path = run_dir / "steps.csv"
    _write_step_csv(csv_path, log, bench.model.n, bench.model.m)
    summary_path = run_dir / "summary.json"
    summary_path.write_text(json.dumps(
        _summarize(config, bench, solver_cfg, log, elapsed_ms_runs), indent=2) + "\n")
    return RunArtifacts(run_dir=run_dir, csv_path=csv_path,
                        summary_path=summary_path, resolved_config_path=resolved_path)


def sweep(configs: Sequence[ExperimentConfig], out_root: Optional[str] = None) -> list[dict]:
    """Run each config in sequence and write a combined sweep.csv.

    Individual failures are recorded with their error kind and the sweep
    continues.  Returns one record per config with its status and artifacts.
    """
    if not configs:
        raise ConfigError("sweep needs at least one config")
    ids = [c.config_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError("sweep configs must have distinct config_id values")
    results = []
    for config in configs:
        record: dict = {"config_id": config.config_id, "config": config}
        try:
            artifacts = run_experiment(config, out_root)
            record["status"] = "ok"
            record["artifacts"] = artifacts
            record["summary"] = json.loads(artifacts.summary_path.read_text())
        except SampledNmpcError as exc:
            record["status"] = "error"
            record["error"] = type(exc).__name__
            record["message"] = str(exc)
        results.append(record)

    root = resolve_output_root(out_root, configs[0])
    root.mkdir(parents=True, exist_ok=True)
    sweep_path = root / "sweep.csv"
    header = ["config_id", "status", "plant", "N", "n_bar", "steps", "lanes", "pruning",
              "total_elapsed_ms", "f_evals_per_solve_min", "f_evals_per_solve_max",
              "cost_evals_per_solve_min", "cost_evals_per_solve_max",
              "predicted_f_evals_per_solve", "predicted_cost_evals_per_solve",
              "serial_exact", "serial_bound", "full_parallel", "p_parallel"]
    with sweep_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for record in results:
            config = record["config"]
            counts = (config.samples_per_step if not isinstance(config.samples_per_step, int)
                      else (config.samples_per_step,) * config.horizon)
            base = [config.config_id, record["status"], config.plant,
                    str(config.horizon), str(max(counts) if counts else 0),
                    str(config.steps), str(config.lanes), str(int(config.pruning))]
            if record["status"] == "ok":
                summary = record["summary"]
                comp = summary["complexity"]
                per = summary["per_solve"]
                row = base + [
                    _fmt(summary["totals"]["elapsed_ms"]),
                    str(per["f_evals_min"]), str(per["f_evals_max"]),
                    str(per["cost_evals_min"]), str(per["cost_evals_max"]),
                    str(comp["predicted_f_evals_per_solve"]),
                    str(comp["predicted_cost_evals_per_solve"]),
                    _fmt(comp["serial_exact"]), _fmt(comp["serial_bound"]),
                    _fmt(comp["full_parallel"]), _fmt(comp["p_parallel"]),
                ]
            else:
                row = base + [""] * (len(header) - len(base))
            writer.writerow(row)
    for record in results:
        record["sweep_csv"] = sweep_path
        record.pop("config")
    return results


def validate_run(run_dir: str | os.PathLike) -> list[dict]:
    """Re-check a finished run's CSV against the plant's constraint sets.

    Returns one record per violation (empty when the log is clean).
    """
    run_dir = Path(run_dir)
    resolved = json.loads((run_dir / "config.resolved.json").read_text())
    resolved.pop("resolved", None)
    config = ExperimentConfig.from_dict(resolved)
    bench = make_benchmark(config.plant, config.horizon, config.model_overrides)
    n, m = bench.model.n, bench.model.m
    violations = []
    with (run_dir / "steps.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            x = np.array([float(row[f"x{i}"]) for i in range(n)])
            u = np.array([float(row[f"u{i}"]) for i in range(m)])
            kind = bench.constraints.state_violation_kind(x)
            if kind is not None:
                violations.append({"k": k, "kind": kind, "state": x.tolist()})
            if not bench.constraints.input_ok(u):
                violations.append({"k": k, "kind": "input-bound", "input": u.tolist()})
    return violations
