"""Non-even sales: agents choose a kept share per asset instead of one scalar.

The strategy of each agent becomes a vector over assets. Valuation mirrors the
scalar model with per-asset kept shares; the scalar model is recovered when
every row is constant. The single-agent best response stays tractable under
post-sale pricing with linear impact: maximize a linear equity subject to one
separable convex quadratic leverage constraint and box bounds, solved by
bisection on the constraint's Lagrange multiplier.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    NEG_INF,
    TOL,
    Game,
    GameError,
    valuation_batch,
)

MULTIPLIER_TOL = 1e-10

VectorProfile = np.ndarray  # shape (n, m), entry (i, j) the kept share of asset j


def as_vector_profile(Y: Sequence[Sequence[float]], n: int, m: int) -> VectorProfile:
    arr = np.asarray(Y, dtype=float)
    if arr.shape != (n, m):
        raise GameError(f"vector profile must have shape ({n}, {m}), got {arr.shape}")
    if np.any(arr < -TOL) or np.any(arr > 1 + TOL):
        raise GameError("vector profile entries must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def from_even(y: np.ndarray, m: int) -> VectorProfile:
    """Lift a scalar profile to the row-constant vector profile."""
    return np.repeat(np.asarray(y, dtype=float)[:, None], m, axis=1)


# ---------------------------------------------------------------------------
# valuation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorValuation:
    agent: int
    assets_value: float
    revenue: float
    equity: float
    leverage: Optional[float]
    utility: float


def kept_amounts_noneven(game: Game, Y: VectorProfile) -> np.ndarray:
    return (Y * game.holdings).sum(axis=0)


def _equities(game: Game, Y: VectorProfile):
    x = game.holdings
    kept = (Y * x).sum(axis=0)
    p = game.prices_at(kept)
    assets_value = game.illiquid_assets + (Y * x) @ p
    effective = (1.0 - game.alpha) * game.initial_prices + game.alpha * p
    revenue = ((1.0 - Y) * x) @ effective
    equity = assets_value + revenue - game.liabilities
    return assets_value, revenue, equity


def valuation_noneven(game: Game, Y: VectorProfile, i: int) -> VectorValuation:
    """Balance-sheet snapshot of agent i under a per-asset strategy profile."""
    Y = as_vector_profile(Y, game.n_agents, game.n_assets)
    assets_value, revenue, equity = _equities(game, Y)
    e = float(equity[i])
    lev = float(assets_value[i] / e) if e > 0 else None
    liquidated = bool(np.all(Y[i] == 0.0))
    feasible = lev is not None and lev <= game.leverage_cap + TOL
    utility = e if (liquidated or feasible) else NEG_INF
    return VectorValuation(i, float(assets_value[i]), float(revenue[i]), e, lev, utility)


def utilities_noneven(game: Game, Y: VectorProfile) -> np.ndarray:
    return np.array([valuation_noneven(game, Y, i).utility for i in range(game.n_agents)])


def social_welfare_noneven(game: Game, Y: VectorProfile) -> float:
    util = utilities_noneven(game, Y)
    if np.any(np.isneginf(util)):
        return NEG_INF
    return float(util.sum())


# ---------------------------------------------------------------------------
# best response (post-sale pricing, linear impact)
# ---------------------------------------------------------------------------


def _own_problem(game: Game, i: int, Y: VectorProfile):
    """Separable data of agent i's response problem.

    equity(t) = base + beta . t, risky(t) = aI + sum_j (beta_j t_j^2 + w_j t_j),
    with beta_j = x_ij^2 p0_j and w_j = x_ij p0_j * (kept by the others in j).
    """
    x_i = game.holdings[i]
    p0 = game.initial_prices
    rest = kept_amounts_noneven(game, Y) - x_i * Y[i]
    beta = x_i * x_i * p0
    w = x_i * p0 * rest
    base = float(game.equity_base[i] + w.sum())
    return beta, w, base


def _constraint(game: Game, i: int, beta, w, base, t) -> float:
    lam = game.leverage_cap
    risky = float(game.illiquid_assets[i]) + float(beta @ (t * t) + w @ t)
    return risky - lam * (base + float(beta @ t))


def _candidate(beta, w, lam, mu) -> np.ndarray:
    """Box-clamped stationary point for multiplier mu; free assets keep 1."""
    t = np.ones_like(beta)
    held = beta > 0
    t[held] = 0.5 / mu + lam / 2.0 - w[held] / (2.0 * beta[held])
    return np.clip(t, 0.0, 1.0)


def best_response_noneven(game: Game, i: int, Y: VectorProfile) -> np.ndarray:
    """Equity-maximizing per-asset kept shares of agent i against Y[-i].

    Requires post-sale pricing with linear impact. Returns the zero vector
    when no strategy satisfies the leverage cap with positive equity. Assets
    the agent does not hold are kept at 1 (the lexicographically largest
    representative of a tie surface).
    """
    if not (game.post_sale_pricing and game.all_linear):
        raise ValueError("non-even best response requires alpha == 1 and linear impact")
    Y = as_vector_profile(Y, game.n_agents, game.n_assets)
    beta, w, base = _own_problem(game, i, Y)
    lam = game.leverage_cap
    ones = np.ones(game.n_assets)
    if _constraint(game, i, beta, w, base, ones) <= TOL:
        if base + float(beta @ ones) > 0:
            return ones
        return np.zeros(game.n_assets)
    # The box minimum of the constraint is the limit of large multipliers.
    t_min = _candidate(beta, w, lam, np.inf)
    if _constraint(game, i, beta, w, base, t_min) > TOL:
        return np.zeros(game.n_assets)  # cap unattainable: forced liquidation
    lo = 1e-16
    while _constraint(game, i, beta, w, base, _candidate(beta, w, lam, lo)) <= 0:
        lo /= 2.0
        if lo < 1e-300:
            break
    hi = 1.0
    while _constraint(game, i, beta, w, base, _candidate(beta, w, lam, hi)) > 0:
        hi *= 2.0
        if hi > 1e300:
            return np.zeros(game.n_assets)
    while hi - lo > MULTIPLIER_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _constraint(game, i, beta, w, base, _candidate(beta, w, lam, mid)) > 0:
            lo = mid
        else:
            hi = mid
    t = _candidate(beta, w, lam, hi)
    if base + float(beta @ t) <= 0:
        return np.zeros(game.n_assets)
    return t


# ---------------------------------------------------------------------------
# improving-response replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImprovingStep:
    agent: int
    profile: VectorProfile
    utilities: np.ndarray
    mover_gain: float  # utility change of the mover, +inf when leaving -inf


@dataclass(frozen=True)
class ImprovingTrace:
    start: VectorProfile
    start_utilities: np.ndarray
    steps: tuple[ImprovingStep, ...]

    @property
    def profiles(self) -> list[VectorProfile]:
        return [self.start] + [s.profile for s in self.steps]

    @property
    def utilities(self) -> np.ndarray:
        return np.vstack([self.start_utilities] + [s.utilities for s in self.steps])


def improving_response_run(game: Game, start: VectorProfile,
                           schedule: Sequence[tuple[int, Sequence[float]]]) -> ImprovingTrace:
    """Replay scheduled unilateral deviations, recording utilities at each state.

    Each schedule entry is (agent, new per-asset kept shares). The mover's
    utility change is recorded so improving-response cycles can be audited;
    deviations are applied whether or not they improve.
    """
    Y = as_vector_profile(start, game.n_agents, game.n_assets)
    u = utilities_noneven(game, Y)
    steps = []
    for agent, row in schedule:
        row = np.asarray(row, dtype=float)
        if row.shape != (game.n_assets,):
            raise GameError(f"deviation for agent {agent} must list {game.n_assets} shares")
        before = u[agent]
        Y = Y.copy()
        Y[agent] = np.clip(row, 0.0, 1.0)
        u = utilities_noneven(game, Y)
        gain = float("inf") if np.isneginf(before) else float(u[agent] - before)
        steps.append(ImprovingStep(agent, Y, u, gain))
    first = utilities_noneven(game, as_vector_profile(start, game.n_agents, game.n_assets))
    return ImprovingTrace(np.asarray(start, dtype=float), first, tuple(steps))


# ---------------------------------------------------------------------------
# CSV profile files
# ---------------------------------------------------------------------------


def vector_profile_to_csv(Y: VectorProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(Y, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def vector_profile_from_csv(path, n: int, m: int) -> VectorProfile:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return as_vector_profile(arr, n, m)
