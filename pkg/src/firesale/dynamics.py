"""Best-response dynamics: synchronous, sequential, and simplified runs.

A run iterates a best-response operator from a start profile, records the full
trajectory, and terminates with one of three verdicts: converged (all strategy
changes in a step fell below the stop threshold), cycle detected (the profile
returned to a recent state), or budget exhausted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import bestresponse
from .model import Game, Profile, TOL, as_profile, valuation_batch

CYCLE_TOL = 1e-9
MOVE_TOL = 1e-9


class DynamicsKind(Enum):
    SYNCHRONOUS_EXACT = "synchronous_exact"
    SEQUENTIAL_EXACT = "sequential_exact"
    SYNCHRONOUS_SIMPLIFIED = "synchronous_simplified"


class Verdict(Enum):
    CONVERGED = "converged"
    CYCLE_DETECTED = "cycle_detected"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class DynamicsConfig:
    kind: DynamicsKind = DynamicsKind.SYNCHRONOUS_EXACT
    start: Optional[Sequence[float]] = None  # defaults to all-ones
    delta: float = 1e-5  # stop when every strategy change in a step is below this
    max_steps: int = 10_000
    cycle_window: int = 64
    order: Optional[Sequence[int]] = None  # sequential deviation order, round-robin
    record_valuations: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("stop threshold must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class CycleInfo:
    period: int
    states: np.ndarray  # (period, n) profiles forming the cycle


@dataclass
class DynamicsTrace:
    profiles: np.ndarray  # (T+1, n), including the start profile
    step_max: np.ndarray  # (T,) max-norm strategy change per step
    step_mean: np.ndarray  # (T,) mean absolute strategy change per step
    movers: np.ndarray  # (T,) moving agent per step, -1 for synchronous steps
    verdict: Verdict
    cycle: Optional[CycleInfo] = None
    equities: Optional[np.ndarray] = None  # (T+1, n)
    utilities: Optional[np.ndarray] = None  # (T+1, n), may contain -inf
    monotone_nonincreasing: bool = False

    @property
    def final(self) -> Profile:
        return self.profiles[-1]

    @property
    def steps(self) -> int:
        return len(self.step_max)


def _operator(game: Game, kind: DynamicsKind):
    if kind == DynamicsKind.SYNCHRONOUS_SIMPLIFIED:
        return lambda y: bestresponse.simplified_profile_map(game, y)
    return lambda y: bestresponse.exact_profile_map(game, y)


def _find_cycle(profiles: list[np.ndarray], window: int) -> Optional[int]:
    """Smallest period at which the newest profile matches a recent one.

    A match only counts as a cycle when the states in between are genuinely
    distinct; otherwise a slowly converging tail would register as a cycle
    before the stop threshold is reached.
    """
    current = profiles[-1]
    limit = min(window, len(profiles) - 1)
    for period in range(2, limit + 1):
        if np.max(np.abs(current - profiles[-1 - period])) <= CYCLE_TOL:
            spread = max(float(np.max(np.abs(current - profiles[-1 - k])))
                         for k in range(1, period))
            if spread > 10.0 * CYCLE_TOL:
                return period
    return None


def _finish(profiles, step_max, step_mean, movers, verdict, cycle, game, cfg,
            start) -> DynamicsTrace:
    prof = np.array(profiles)
    equities = utilities = None
    if cfg.record_valuations:
        va = valuation_batch(game, prof)
        equities, utilities = va.equity, va.utility
    monotone = bool(np.all(prof[1:] <= prof[:-1] + 1e-9)) if len(prof) > 1 else True
    return DynamicsTrace(
        profiles=prof,
        step_max=np.array(step_max),
        step_mean=np.array(step_mean),
        movers=np.array(movers, dtype=int),
        verdict=verdict,
        cycle=cycle,
        equities=equities,
        utilities=utilities,
        monotone_nonincreasing=monotone,
    )


def _run_synchronous(game: Game, cfg: DynamicsConfig, y0: Profile) -> DynamicsTrace:
    op = _operator(game, cfg.kind)
    profiles = [y0.copy()]
    step_max: list[float] = []
    step_mean: list[float] = []
    movers: list[int] = []
    verdict, cycle = Verdict.BUDGET_EXHAUSTED, None
    y = y0.copy()
    for _ in range(cfg.max_steps):
        y_next = op(y)
        d = np.abs(y_next - y)
        step_max.append(float(d.max()))
        step_mean.append(float(d.mean()))
        movers.append(-1)
        profiles.append(y_next.copy())
        y = y_next
        if step_max[-1] <= cfg.delta:
            verdict = Verdict.CONVERGED
            break
        period = _find_cycle(profiles, cfg.cycle_window)
        if period is not None:
            verdict = Verdict.CYCLE_DETECTED
            cycle = CycleInfo(period, np.array(profiles[-period:]))
            break
    return _finish(profiles, step_max, step_mean, movers, verdict, cycle, game, cfg, y0)


def _run_sequential(game: Game, cfg: DynamicsConfig, y0: Profile) -> DynamicsTrace:
    n = game.n_agents
    order = list(cfg.order) if cfg.order is not None else list(range(n))
    if sorted(set(order)) != list(range(n)):
        raise ValueError("sequential order must be a permutation of all agents")
    profiles = [y0.copy()]
    step_max: list[float] = []
    step_mean: list[float] = []
    movers: list[int] = []
    verdict, cycle = Verdict.BUDGET_EXHAUSTED, None
    y = y0.copy()
    moves = 0
    done = False
    # Agents already playing a best response are skipped; the skip threshold
    # must not exceed the stop threshold or sub-threshold drift could neither
    # converge nor consume budget.
    move_tol = min(MOVE_TOL, cfg.delta)
    while not done:
        round_max = 0.0
        for i in order:
            br = bestresponse.best_response(game, i, y).keep
            change = abs(br - y[i])
            round_max = max(round_max, change)
            if change <= move_tol:
                continue
            y = y.copy()
            y[i] = br
            moves += 1
            step_max.append(change)
            step_mean.append(change / n)
            movers.append(i)
            profiles.append(y.copy())
            period = _find_cycle(profiles, cfg.cycle_window)
            if period is not None:
                verdict = Verdict.CYCLE_DETECTED
                cycle = CycleInfo(period, np.array(profiles[-period:]))
                done = True
                break
            if moves >= cfg.max_steps:
                done = True
                break
        else:
            if round_max <= cfg.delta:
                verdict = Verdict.CONVERGED
                done = True
    return _finish(profiles, step_max, step_mean, movers, verdict, cycle, game, cfg, y0)


def run_dynamics(game: Game, cfg: DynamicsConfig) -> DynamicsTrace:
    """Iterate the configured best-response operator and record the trajectory."""
    if cfg.kind == DynamicsKind.SYNCHRONOUS_SIMPLIFIED:
        if not (game.post_sale_pricing and game.all_linear):
            raise ValueError("simplified dynamics require alpha == 1 and linear impact")
    y0 = (np.ones(game.n_agents) if cfg.start is None
          else as_profile(cfg.start, game.n_agents))
    if cfg.kind == DynamicsKind.SEQUENTIAL_EXACT:
        return _run_sequential(game, cfg, y0)
    return _run_synchronous(game, cfg, y0)


def step_size_series(trace: DynamicsTrace) -> np.ndarray:
    """Per-step statistics: rows of (step index, max |dy|, mean |dy|)."""
    if trace.steps == 0:
        return np.empty((0, 3))
    t = np.arange(1, trace.steps + 1, dtype=float)
    return np.column_stack([t, trace.step_max, trace.step_mean])


# ---------------------------------------------------------------------------
# approximate-equilibrium check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentCheck:
    agent: int
    status: str
    equity_gain: float  # clause 1: attainable equity improvement (liquid only)
    leverage_excess: float  # clause 2: leverage above the cap (liquid only)
    forced_keep: float  # clause 3: kept share of a non-liquid agent


@dataclass(frozen=True)
class ApproxEquilibriumReport:
    epsilon: float
    passed: bool
    worst_equity_gain: float
    worst_leverage_excess: float
    worst_forced_keep: float
    agents: tuple[AgentCheck, ...]


def check_approx_equilibrium(game: Game, y: Profile, epsilon: float) -> ApproxEquilibriumReport:
    """Check the three-clause approximate-equilibrium conditions at y.

    Liquid agents may not be able to gain more than epsilon equity through any
    deviation that keeps them liquid (assessed with the exact best-response
    oracle), and their leverage may exceed the cap by at most epsilon. Agents
    with no feasible strategy must keep at most epsilon.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    y = as_profile(y, game.n_agents)
    va = valuation_batch(game, y[None, :])
    checks = []
    worst_gain = worst_excess = worst_keep = 0.0
    for i in range(game.n_agents):
        status = bestresponse.agent_status(game, i, y)
        gain = excess = keep = 0.0
        if status.value == "liquid":
            br = bestresponse.best_response(game, i, y)
            gain = max(0.0, br.utility - float(va.equity[0, i]))
            lev = va.leverage[0, i]
            lev = float(lev) if np.isfinite(lev) else float("inf")
            excess = max(0.0, lev - game.leverage_cap)
        else:
            keep = float(y[i])
        checks.append(AgentCheck(i, status.value, gain, excess, keep))
        worst_gain = max(worst_gain, gain)
        worst_excess = max(worst_excess, excess)
        worst_keep = max(worst_keep, keep)
    passed = (worst_gain <= epsilon and worst_excess <= epsilon and worst_keep <= epsilon)
    return ApproxEquilibriumReport(epsilon, passed, worst_gain, worst_excess,
                                   worst_keep, tuple(checks))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def trace_to_csv(trace: DynamicsTrace, path: Union[str, Path]) -> None:
    """Write the trajectory as CSV: step, mover, kept shares, step sizes."""
    n = trace.profiles.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mover"] + [f"y_{i}" for i in range(n)]
                        + ["stepsize_max", "stepsize_mean"])
        writer.writerow([0, ""] + [repr(float(v)) for v in trace.profiles[0]] + ["", ""])
        for t in range(trace.steps):
            mover = "" if trace.movers[t] < 0 else int(trace.movers[t])
            writer.writerow([t + 1, mover]
                            + [repr(float(v)) for v in trace.profiles[t + 1]]
                            + [repr(float(trace.step_max[t])),
                               repr(float(trace.step_mean[t]))])


def verdict_to_json(trace: DynamicsTrace, cfg: DynamicsConfig) -> dict:
    doc = {
        "kind": cfg.kind.value,
        "verdict": trace.verdict.value,
        "steps": trace.steps,
        "delta": cfg.delta,
        "max_steps": cfg.max_steps,
        "final_profile": [float(v) for v in trace.final],
        "monotone_nonincreasing": trace.monotone_nonincreasing,
    }
    if trace.cycle is not None:
        doc["cycle_period"] = trace.cycle.period
        doc["cycle_states"] = [[float(v) for v in row] for row in trace.cycle.states]
    return doc


def write_verdict(trace: DynamicsTrace, cfg: DynamicsConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(verdict_to_json(trace, cfg), indent=2) + "\n")
