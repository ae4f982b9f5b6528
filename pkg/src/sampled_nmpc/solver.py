"""Backward-in-horizon, sampling-based improvement of a feasible warm start,
plus warm-start construction (oracle search, receding-horizon shift) and the
closed-loop simulation driver.

One solve walks the horizon positions from the last to the first.  At each
position it draws samples from the input box, forms one candidate plan per
sample by swapping that single position in the current reference plan, and
evaluates all candidates against the reference snapshot taken at entry to the
position: the cheapest strictly-improving feasible candidate (lowest sample
index on ties; the reference survives ties) becomes the reference for the next
position.  Because candidates within a position differ from the snapshot only
at that position, this snapshot-then-reduce rule selects exactly the plan the
sequential accept-if-cheaper loop would, while making results independent of
how candidate evaluations are distributed over parallel lanes.

States and running stage-cost sums of the reference prefix are cached and
reused; a candidate at position j only propagates states j+1..N.  Reported
costs continue the cached left-to-right stage fold, so they equal a fresh
``evaluate_cost`` of the returned plan bit for bit.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ConstraintSpec,
    CostSpec,
    Plan,
    PlantModel,
    as_vector,
    check_feasible,
    evaluate_cost,
    rollout,
    shift_plan,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    InfeasibleWarmStartError,
    NoOracleError,
    NoTerminalLawError,
    WarmStartFailureError,
)
from .sampling import SamplerConfig, SamplerState, derive_seed, draw_samples

__all__ = [
    "SolverConfig",
    "SolveResult",
    "StepRecord",
    "RunLog",
    "improve_plan",
    "find_oracle",
    "make_warm_start",
    "closed_loop",
]

WARM_START_MODES = ("terminal-controller", "feasible-sample", "provided")

_ORACLE_STREAM_TAG = 1
_ORACLE_BATCH = 1024


@dataclass(frozen=True)
class SolverConfig:
    """Solve-time knobs: horizon, per-position sample counts (a scalar
    broadcasts), the sampling scheme, parallel lane count, optional wall-clock
    budget in seconds, infeasible-suffix pruning, the random-search budget for
    oracle and append searches, and how warm starts are built."""

    horizon: int
    samples_per_step: int | Sequence[int] = 10
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lanes: int = 1
    time_budget: Optional[float] = None
    pruning: bool = True
    oracle_budget: int = 100_000
    warm_start_mode: str = "terminal-controller"
    improve_initial: bool = True
    initial_plan: Optional[Plan] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.lanes < 1:
            raise ConfigError("lanes must be >= 1")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ConfigError("time_budget must be positive when set")
        if self.oracle_budget < 0:
            raise ConfigError("oracle_budget must be nonnegative")
        if self.warm_start_mode not in WARM_START_MODES:
            raise ConfigError(f"warm_start_mode must be one of {WARM_START_MODES}")
        counts = self.samples_per_step
        if np.isscalar(counts):
            counts = (int(counts),) * self.horizon
        else:
            counts = tuple(int(c) for c in counts)
        if len(counts) != self.horizon:
            raise ConfigError(
                f"samples_per_step has {len(counts)} entries for horizon {self.horizon}")
        if any(c < 0 for c in counts):
            raise ConfigError("sample counts must be nonnegative")
        object.__setattr__(self, "samples_per_step", counts)

    @property
    def sample_counts(self) -> tuple[int, ...]:
        return self.samples_per_step  # normalized to a tuple in __post_init__


@dataclass(frozen=True)
class SolveResult:
    """One solve's outcome: the improved plan, its cost, exact work counters
    (plant steps and full-cost evaluations spent on candidates), the number of
    accepted replacements, wall time and whether the budget cut the sweep."""

    plan: Plan
    j_sub: float
    f_evals: int
    cost_evals: int
    improvements: int
    elapsed: float
    budget_hit: bool


@dataclass(frozen=True)
class StepRecord:
    """Per-closed-loop-step log row (state BEFORE applying the input)."""

    k: int
    state: np.ndarray
    applied_input: np.ndarray
    j_sub: float
    f_evals: int
    cost_evals: int
    improvements: int
    elapsed: float
    budget_hit: bool


@dataclass(frozen=True)
class RunLog:
    """Closed-loop record: one StepRecord per applied input, the visited
    states (one more than records) and why the run ended."""

    records: tuple[StepRecord, ...]
    states: np.ndarray
    termination: str


@dataclass
class _Candidate:
    index: int
    feasible: bool
    j_new: float
    states_suffix: Optional[np.ndarray]  # states j+1..N when fully propagated
    stage_suffix: Optional[np.ndarray]  # stage costs j..N-1 when evaluated
    f_used: int
    cost_used: int


def _evaluate_candidate(index: int, j: int, sample: np.ndarray,
                        ref_states: np.ndarray, ref_inputs: np.ndarray,
                        model: PlantModel, constraints: ConstraintSpec,
                        cost: CostSpec, prefix_j: float, pruning: bool,
                        big_n: int) -> _Candidate:
    """Propagate and price one single-position replacement at position j."""
    f_used = 0
    feasible = constraints.input_ok(sample)  # redundant for in-box samples
    if pruning and not feasible:
        return _Candidate(index, False, np.nan, None, None, 0, 0)
    states_suffix = np.empty((big_n - j, model.n), dtype=np.float64)
    stage_suffix = np.empty(big_n - j, dtype=np.float64)
    stage_suffix[0] = cost.stage_cost(j, ref_states[j], sample)
    x = ref_states[j]
    u = sample
    for i in range(j + 1, big_n + 1):
        x = model.step(x, u)
        f_used += 1
        states_suffix[i - j - 1] = x
        if i <= big_n - 1:
            if feasible and not constraints.state_ok(x):
                feasible = False
                if pruning:
                    return _Candidate(index, False, np.nan, None, None, f_used, 0)
            u = ref_inputs[i]
            stage_suffix[i - j] = cost.stage_cost(i, x, u)
        else:
            if feasible and not constraints.terminal_ok(x):
                feasible = False
    if pruning and not feasible:
        return _Candidate(index, False, np.nan, None, None, f_used, 0)
    # Continue the reference's left-to-right cost fold so the total matches
    # evaluate_cost on the full candidate plan exactly.
    total = prefix_j
    for s in stage_suffix:
        total = total + s
    total = total + cost.terminal_cost(states_suffix[-1])
    return _Candidate(index, feasible, total, states_suffix, stage_suffix, f_used, 1)


def improve_plan(x: np.ndarray, warm: Plan, model: PlantModel,
                 constraints: ConstraintSpec, cost: CostSpec, cfg: SolverConfig,
                 sampler_state: Optional[SamplerState] = None) -> SolveResult:
    """Run one backward sweep of single-position sample replacements.

    The warm start is re-verified on entry and rejected if infeasible.  The
    returned cost never exceeds the warm start's cost, and the returned plan
    is feasible even when the time budget interrupts the sweep.
    """
    t_start = time.perf_counter()
    deadline = None if cfg.time_budget is None else t_start + cfg.time_budget
    big_n = cfg.horizon
    if warm.horizon != big_n:
        raise ContractViolationError(f"warm start has horizon {warm.horizon}, config says {big_n}")
    if cost.horizon != big_n:
        raise ContractViolationError("cost horizon disagrees with solver horizon")
    x = as_vector(x, model.n, "state")
    if sampler_state is None:
        sampler_state = SamplerState(cfg.sampler)

    warm_traj = rollout(model, x, warm)
    report = check_feasible(constraints, warm_traj, warm, 0)
    if not report.feasible:
        raise InfeasibleWarmStartError(
            f"warm start violates {report.violation_kind} at index {report.violation_index}")

    ref_inputs = warm.inputs.copy()
    ref_states = warm_traj.states.copy()
    # stage_vals[i] is the stage cost at position i of the current reference;
    # prefix[i] folds stage_vals[0..i-1] left to right.
    stage_vals = np.empty(big_n, dtype=np.float64)
    prefix = np.empty(big_n + 1, dtype=np.float64)
    prefix[0] = 0.0
    for i in range(big_n):
        stage_vals[i] = cost.stage_cost(i, ref_states[i], ref_inputs[i])
        prefix[i + 1] = prefix[i] + stage_vals[i]
    j_ref = prefix[big_n] + cost.terminal_cost(ref_states[big_n])

    counts = cfg.sample_counts
    f_evals = 0
    cost_evals = 0
    improvements = 0
    budget_hit = False
    executor = ThreadPoolExecutor(max_workers=cfg.lanes) if cfg.lanes > 1 else None
    try:
        for j in range(big_n - 1, -1, -1):
            if deadline is not None and time.perf_counter() >= deadline:
                budget_hit = True
                break
            n_j = counts[j]
            if n_j == 0:
                continue
            samples = draw_samples(sampler_state, constraints.input_box, n_j)

            interrupted = [False]

            def eval_range(lo: int, hi: int) -> list[_Candidate]:
                out = []
                for q in range(lo, hi):
                    if deadline is not None and time.perf_counter() >= deadline:
                        interrupted[0] = True
                        break
                    out.append(_evaluate_candidate(
                        q, j, samples[q], ref_states, ref_inputs, model,
                        constraints, cost, prefix[j], cfg.pruning, big_n))
                return out

            if executor is None:
                evaluated = eval_range(0, n_j)
            else:
                chunk = -(-n_j // cfg.lanes)
                bounds = [(lo, min(lo + chunk, n_j)) for lo in range(0, n_j, chunk)]
                evaluated = []
                for part in executor.map(lambda b: eval_range(*b), bounds):
                    evaluated.extend(part)
                evaluated.sort(key=lambda c: c.index)

            winner = None
            for cand in evaluated:
                f_evals += cand.f_used
                cost_evals += cand.cost_used
                if cand.feasible and cand.j_new < j_ref:
                    if winner is None or cand.j_new < winner.j_new:
                        winner = cand
            if winner is not None:
                ref_inputs[j] = samples[winner.index]
                ref_states[j + 1:] = winner.states_suffix
                stage_vals[j:] = winner.stage_suffix
                for i in range(j, big_n):
                    prefix[i + 1] = prefix[i] + stage_vals[i]
                j_ref = winner.j_new
                improvements += 1
            if interrupted[0]:
                budget_hit = True
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    return SolveResult(plan=Plan(ref_inputs), j_sub=float(j_ref), f_evals=f_evals,
                       cost_evals=cost_evals, improvements=improvements,
                       elapsed=time.perf_counter() - t_start, budget_hit=budget_hit)


def _oracle_stream(cfg: SolverConfig) -> SamplerState:
    # Random search always draws from its own seed-derived random stream, even
    # when improvement sampling uses grid or Halton points: the grid repeats
    # the same sequence forever and would never explore new candidates.
    return SamplerState(SamplerConfig(scheme="random",
                                      seed=derive_seed(cfg.sampler.seed, _ORACLE_STREAM_TAG)))


def find_oracle(x: np.ndarray, model: PlantModel, constraints: ConstraintSpec,
                cost: CostSpec, cfg: SolverConfig) -> Plan:
    """Draw random full input sequences until one is feasible from x.

    Deterministic for a given seed; raises NoOracleError when the budget is
    exhausted (including a budget of zero).
    """
    del cost  # the oracle only needs feasibility
    x = as_vector(x, model.n, "state")
    if cfg.oracle_budget < 1:
        raise NoOracleError("oracle budget is zero")
    if not constraints.state_ok(x):
        raise NoOracleError(f"initial state {x} violates the state constraints")
    big_n = cfg.horizon
    stream = _oracle_stream(cfg)
    remaining = cfg.oracle_budget
    while remaining > 0:
        batch = min(remaining, _ORACLE_BATCH)
        remaining -= batch
        flat = draw_samples(stream, constraints.input_box, batch * big_n)
        sequences = flat.reshape(batch, big_n, model.m)
        hit = _first_feasible_sequence(x, sequences, model, constraints)
        if hit is not None:
            plan = Plan(sequences[hit])
            traj = rollout(model, x, plan)
            report = check_feasible(constraints, traj, plan, 0)
            if not report.feasible:  # membership certificate re-checked
                raise NoOracleError("oracle candidate failed re-certification")
            return plan
    raise NoOracleError(f"no feasible sequence within {cfg.oracle_budget} random draws")


def _first_feasible_sequence(x: np.ndarray, sequences: np.ndarray,
                             model: PlantModel, constraints: ConstraintSpec) -> Optional[int]:
    """Index of the first row of (B, N, m) sequences feasible from x, else None."""
    batch, big_n, _ = sequences.shape
    if model.batch_step is None:
        for b in range(batch):
            plan = Plan(sequences[b])
            traj = rollout(model, x, plan)
            if check_feasible(constraints, traj, plan, 0).feasible:
                return b
        return None
    alive = np.ones(batch, dtype=bool)
    states = np.broadcast_to(x, (batch, x.shape[0])).copy()
    # Dead rows keep stepping (cheaper than compaction); silence any overflow
    # they produce, the comparisons below already exclude them.
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(big_n):
            alive &= constraints.states_ok_rows(states)
            if not alive.any():
                return None
            states = model.batch_step(states, sequences[:, i, :])
        alive &= constraints.terminal_ok_rows(states)
    hits = np.nonzero(alive)[0]
    return int(hits[0]) if hits.size else None


def make_warm_start(prev: SolveResult, x_new: np.ndarray, model: PlantModel,
                    constraints: ConstraintSpec, cfg: SolverConfig,
                    sampler_state: Optional[SamplerState] = None) -> Plan:
    """Shift the previous plan and append a new last input.

    Mode 'terminal-controller' appends the terminal law evaluated at the
    previous predicted end state; 'feasible-sample' tries sampled appends
    until the shifted plan re-certifies; 'provided' (which only affects the
    initial step) falls back to the terminal law when the plant has one.  The
    returned plan is always re-certified end to end.
    """
    x_new = as_vector(x_new, model.n, "state")
    plan_prev = prev.plan
    big_n = plan_prev.horizon
    mode = cfg.warm_start_mode
    if mode == "provided":
        mode = "terminal-controller" if model.terminal_law is not None else "feasible-sample"

    # States of the shifted prefix from the new state; the last one equals the
    # previous solve's predicted end state.
    prefix_states = np.empty((big_n, model.n), dtype=np.float64)
    prefix_states[0] = x_new
    for i in range(1, big_n):
        prefix_states[i] = model.step(prefix_states[i - 1], plan_prev.inputs[i])

    if mode == "terminal-controller":
        if model.terminal_law is None:
            raise NoTerminalLawError(f"plant {model.name or '?'} has no terminal law")
        appended = as_vector(model.terminal_law(prefix_states[-1]), model.m, "terminal input")
        candidate = shift_plan(plan_prev, appended)
        traj = rollout(model, x_new, candidate)
        report = check_feasible(constraints, traj, candidate, 0)
        if not report.feasible:
            raise WarmStartFailureError(
                f"terminal-controller warm start violates {report.violation_kind} "
                f"at index {report.violation_index}")
        return candidate

    if sampler_state is None:
        sampler_state = SamplerState(cfg.sampler)
    end_state = prefix_states[-1]
    remaining = max(cfg.oracle_budget, 1)
    while remaining > 0:
        batch = min(remaining, 256)
        remaining -= batch
        appends = draw_samples(sampler_state, constraints.input_box, batch)
        if model.batch_step is not None:
            finals = model.batch_step(np.broadcast_to(end_state, (batch, model.n)).copy(), appends)
            ok = constraints.terminal_ok_rows(finals)
            hits = np.nonzero(ok)[0]
            pick = int(hits[0]) if hits.size else None
        else:
            pick = None
            for b in range(batch):
                if constraints.terminal_ok(model.step(end_state, appends[b])):
                    pick = b
                    break
        if pick is not None:
            candidate = shift_plan(plan_prev, appends[pick])
            traj = rollout(model, x_new, candidate)
            report = check_feasible(constraints, traj, candidate, 0)
            if not report.feasible:
                raise WarmStartFailureError(
                    f"shifted plan violates {report.violation_kind} at index "
                    f"{report.violation_index}; no appended input can repair it")
            return candidate
    raise WarmStartFailureError(
        f"no feasible appended input within {cfg.oracle_budget} samples")


def closed_loop(model: PlantModel, constraints: ConstraintSpec, cost: CostSpec,
                cfg: SolverConfig, x0: np.ndarray, steps: int) -> RunLog:
    """Simulate the receding-horizon loop for ``steps`` applied inputs.

    The first step seeds the solver with the provided plan (mode 'provided')
    or a random oracle, optionally improving it; every later step shifts the
    previous solution into a warm start and improves that.  Per-step elapsed
    times include warm-start (and oracle) construction.
    """
    x = as_vector(x0, model.n, "initial state")
    if steps < 0:
        raise ContractViolationError("steps must be nonnegative")
    sampler_state = SamplerState(cfg.sampler)
    states = np.empty((steps + 1, model.n), dtype=np.float64)
    states[0] = x
    records: list[StepRecord] = []
    prev: Optional[SolveResult] = None
    for k in range(steps):
        t0 = time.perf_counter()
        if k == 0:
            if cfg.warm_start_mode == "provided":
                if cfg.initial_plan is None:
                    raise ConfigError("warm_start_mode 'provided' requires initial_plan")
                warm = cfg.initial_plan
            else:
                warm = find_oracle(x, model, constraints, cost, cfg)
            if cfg.improve_initial:
                result = improve_plan(x, warm, model, constraints, cost, cfg, sampler_state)
            else:
                traj = rollout(model, x, warm)
                report = check_feasible(constraints, traj, warm, 0)
                if not report.feasible:
                    raise InfeasibleWarmStartError(
                        f"initial plan violates {report.violation_kind} at index "
                        f"{report.violation_index}")
                result = SolveResult(plan=warm, j_sub=evaluate_cost(cost, traj, warm),
                                     f_evals=0, cost_evals=0, improvements=0,
                                     elapsed=time.perf_counter() - t0, budget_hit=False)
        else:
            warm = make_warm_start(prev, x, model, constraints, cfg, sampler_state)
            result = improve_plan(x, warm, model, constraints, cost, cfg, sampler_state)
        elapsed = time.perf_counter() - t0
        u = result.plan.inputs[0].copy()
        records.append(StepRecord(k=k, state=x.copy(), applied_input=u,
                                  j_sub=result.j_sub, f_evals=result.f_evals,
                                  cost_evals=result.cost_evals,
                                  improvements=result.improvements,
                                  elapsed=elapsed, budget_hit=result.budget_hit))
        x = np.asarray(model.step(x, u), dtype=np.float64)
        states[k + 1] = x
        prev = result
    return RunLog(records=tuple(records), states=states, termination="completed")
