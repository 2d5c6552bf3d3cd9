"""Equilibrium search and verification, welfare diagnostics, and what-if tools.

Equilibria are fixed points of the exact best-response map. Under post-sale
pricing or convex impact, iterating that map from the all-ones profile reaches
the point-wise maximal equilibrium; this module wraps that run, verifies fixed
points, samples the equilibrium set, scans for profitable coalition
deviations on small games, and evaluates asset-transfer (bailout) scenarios.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import bestresponse
from .dynamics import DynamicsConfig, DynamicsKind, Verdict, run_dynamics
from .model import (
    NEG_INF,
    AgentStatus,
    Game,
    Profile,
    as_profile,
    social_welfare,
    valuation_batch,
)

EXACTNESS_TOL = 1e-8


class UnsupportedRegimeError(RuntimeError):
    """Raised when an operation needs the lattice regime but the game lacks it."""


def _require_lattice_regime(game: Game, what: str) -> None:
    if not (game.post_sale_pricing or game.all_convex):
        raise UnsupportedRegimeError(
            f"{what} requires post-sale pricing or convex impact; equilibria "
            "may not exist outside that regime")


@dataclass(frozen=True)
class EquilibriumReport:
    profile: np.ndarray
    is_exact: bool
    br_deviation: float  # max |y_i - best_response_i(y)|
    welfare: float
    utilities: np.ndarray
    equities: np.ndarray
    leverages: np.ndarray  # nan where undefined
    statuses: tuple[AgentStatus, ...]
    maximal: bool = False  # True when produced by convergence from all-ones

    def to_json(self) -> dict:
        return {
            "profile": [float(v) for v in self.profile],
            "is_exact": self.is_exact,
            "br_deviation": self.br_deviation,
            "welfare": self.welfare,
            "utilities": [float(v) for v in self.utilities],
            "equities": [float(v) for v in self.equities],
            "leverages": [None if not np.isfinite(v) else float(v) for v in self.leverages],
            "statuses": [s.value for s in self.statuses],
            "maximal": self.maximal,
        }


def verify_equilibrium(game: Game, y: Profile, tol: float = EXACTNESS_TOL,
                       maximal: bool = False) -> EquilibriumReport:
    """Check whether every agent already plays her best response at y."""
    y = as_profile(y, game.n_agents)
    br = bestresponse.exact_profile_map(game, y)
    deviation = float(np.max(np.abs(br - y)))
    va = valuation_batch(game, y[None, :])
    statuses = tuple(bestresponse.agent_status(game, i, y) for i in range(game.n_agents))
    return EquilibriumReport(
        profile=y,
        is_exact=deviation <= tol,
        br_deviation=deviation,
        welfare=social_welfare(game, y),
        utilities=va.utility[0],
        equities=va.equity[0],
        leverages=va.leverage[0],
        statuses=statuses,
        maximal=maximal,
    )


def maximal_equilibrium(game: Game, delta: float = 1e-10,
                        max_steps: int = 1_000_000) -> EquilibriumReport:
    """Point-wise maximal equilibrium via synchronous responses from all-ones."""
    _require_lattice_regime(game, "maximal_equilibrium")
    cfg = DynamicsConfig(kind=DynamicsKind.SYNCHRONOUS_EXACT, delta=delta,
                         max_steps=max_steps, record_valuations=False)
    trace = run_dynamics(game, cfg)
    if trace.verdict != Verdict.CONVERGED:
        raise RuntimeError(f"dynamics from all-ones did not converge: {trace.verdict.value}")
    return verify_equilibrium(game, trace.final, maximal=True)


# ---------------------------------------------------------------------------
# lattice diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeDiagnostics:
    equilibria: tuple[np.ndarray, ...]
    pairs_checked: int
    violations: tuple[dict, ...]  # meet/join profiles that failed verification


def lattice_check(game: Game, samples: int = 100, seed: int = 0,
                  delta: float = 1e-10, max_steps: int = 200_000,
                  max_pairs: int = 400) -> LatticeDiagnostics:
    """Sample equilibria from random starts and test meet/join closure.

    Equilibria are found by sequential dynamics from uniform random starts (a
    heuristic enumerator). For sampled pairs, the point-wise minimum and
    maximum are verified to be equilibria themselves.
    """
    _require_lattice_regime(game, "lattice_check")
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    seen = set()
    for k in range(samples):
        # Both lattice corners are always tried; the rest is uniform.
        if k == 0:
            start = np.ones(game.n_agents)
        elif k == 1:
            start = np.zeros(game.n_agents)
        else:
            start = rng.uniform(0, 1, game.n_agents)
        cfg = DynamicsConfig(kind=DynamicsKind.SEQUENTIAL_EXACT, start=start,
                             delta=delta, max_steps=max_steps, record_valuations=False)
        trace = run_dynamics(game, cfg)
        if trace.verdict != Verdict.CONVERGED:
            continue
        report = verify_equilibrium(game, trace.final)
        if not report.is_exact:
            continue
        key = tuple(np.round(report.profile, 7))
        if key not in seen:
            seen.add(key)
            found.append(report.profile)
    violations = []
    pairs = list(itertools.combinations(range(len(found)), 2))[:max_pairs]
    for a, b in pairs:
        for op, name in ((np.minimum, "meet"), (np.maximum, "join")):
            candidate = op(found[a], found[b])
            report = verify_equilibrium(game, candidate)
            if not report.is_exact:
                violations.append({
                    "kind": name,
                    "pair": (a, b),
                    "profile": candidate.tolist(),
                    "br_deviation": report.br_deviation,
                })
    return LatticeDiagnostics(tuple(found), len(pairs), tuple(violations))


# ---------------------------------------------------------------------------
# coalition deviations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoalitionDeviation:
    coalition: tuple[int, ...]
    deviation: np.ndarray  # kept shares of the coalition members
    gains: np.ndarray  # strictly positive utility gains of the members
    profile: np.ndarray  # the full deviated profile

    def to_json(self) -> dict:
        return {
            "coalition": list(self.coalition),
            "deviation": [float(v) for v in self.deviation],
            "gains": [float(v) for v in self.gains],
            "profile": [float(v) for v in self.profile],
        }


def _coalition_gain(game: Game, y: Profile, coalition: Sequence[int],
                    grid_values: Sequence[np.ndarray], u0: np.ndarray):
    """Best strictly-improving joint deviation of one coalition on a grid."""
    members = list(coalition)
    mesh = np.meshgrid(*grid_values, indexing="ij")
    cand = np.stack([m.ravel() for m in mesh], axis=1)  # (B, |C|)
    profiles = np.tile(y, (cand.shape[0], 1))
    profiles[:, members] = cand
    util = valuation_batch(game, profiles).utility[:, members]
    base = u0[members]
    ruined = np.isneginf(base)[None, :]
    # Any finite utility improves on a ruined member; otherwise require a
    # strict gain beyond noise level.
    with np.errstate(invalid="ignore"):
        improves = np.isfinite(util) & (ruined | (util > base[None, :] + 1e-9))
    improving = np.all(improves, axis=1)
    if not improving.any():
        return None
    with np.errstate(invalid="ignore"):
        gain = np.where(ruined, np.inf, util - base[None, :])
    min_gain = np.where(improving, gain.min(axis=1), -np.inf)
    best = int(np.argmax(min_gain))
    return cand[best], profiles[best]


def coalition_scan(game: Game, y: Profile, grid: int = 51,
                   refine: bool = True, max_agents: int = 4) -> Optional[CoalitionDeviation]:
    """Search all coalitions for a joint deviation every member strictly gains from.

    Exhaustive over coalitions with a per-member grid, so it only scales to
    small games (n <= ``max_agents``). Returns the deviation with the largest
    worst-member gain, or None when no coalition can improve.
    """
    n = game.n_agents
    if n > max_agents:
        raise ValueError(f"coalition_scan is exhaustive; games larger than "
                         f"{max_agents} agents are not supported")
    y = as_profile(y, n)
    u0 = valuation_batch(game, y[None, :]).utility[0]
    base_grid = np.linspace(0.0, 1.0, grid)
    best: Optional[CoalitionDeviation] = None
    best_gain = 0.0
    for size in range(1, n + 1):
        for coalition in itertools.combinations(range(n), size):
            hit = _coalition_gain(game, y, coalition, [base_grid] * size, u0)
            if hit is None:
                continue
            cand, profile = hit
            if refine:
                h = 1.0 / (grid - 1)
                local = [np.clip(np.linspace(c - h, c + h, 11), 0.0, 1.0) for c in cand]
                finer = _coalition_gain(game, y, coalition, local, u0)
                if finer is not None:
                    cand, profile = finer
            util = valuation_batch(game, profile[None, :]).utility[0]
            gains = util[list(coalition)] - u0[list(coalition)]
            worst = float(np.min(np.where(np.isneginf(u0[list(coalition)]), np.inf, gains)))
            if best is None or worst > best_gain:
                best = CoalitionDeviation(coalition, cand.copy(), gains, profile.copy())
                best_gain = worst
    return best


# ---------------------------------------------------------------------------
# welfare scans (desk scale)
# ---------------------------------------------------------------------------


def _profile_grid(n: int, values: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*values, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def social_optimum_scan(game: Game, resolution: int = 101,
                        refine: bool = True) -> tuple[np.ndarray, float]:
    """Grid search of utilitarian welfare; exhaustive, so n <= 3 only."""
    n = game.n_agents
    if n > 3:
        raise ValueError("social_optimum_scan is exhaustive; use n <= 3 games")
    axis = np.linspace(0.0, 1.0, resolution)
    profiles = _profile_grid(n, [axis] * n)
    util = valuation_batch(game, profiles).utility
    welfare = np.where(np.any(np.isneginf(util), axis=1), NEG_INF, util.sum(axis=1))
    best = int(np.argmax(welfare))
    best_profile, best_welfare = profiles[best], float(welfare[best])
    if refine:
        h = 1.0 / (resolution - 1)
        local = [np.clip(np.linspace(v - h, v + h, 21), 0.0, 1.0) for v in best_profile]
        fine = _profile_grid(n, local)
        util = valuation_batch(game, fine).utility
        welfare = np.where(np.any(np.isneginf(util), axis=1), NEG_INF, util.sum(axis=1))
        k = int(np.argmax(welfare))
        if welfare[k] > best_welfare:
            best_profile, best_welfare = fine[k], float(welfare[k])
    return best_profile.copy(), best_welfare


def pareto_front_grid(game: Game, resolution: int = 41) -> np.ndarray:
    """Grid profiles whose utility vectors are not dominated on the grid."""
    n = game.n_agents
    if n > 3:
        raise ValueError("pareto_front_grid is exhaustive; use n <= 3 games")
    axis = np.linspace(0.0, 1.0, resolution)
    profiles = _profile_grid(n, [axis] * n)
    util = valuation_batch(game, profiles).utility
    finite = np.all(np.isfinite(util), axis=1)
    profiles, util = profiles[finite], util[finite]
    order = np.argsort(-util.sum(axis=1))
    keep: list[int] = []
    for idx in order:
        dominated = False
        for kept in keep:
            if np.all(util[kept] >= util[idx] - 1e-12) and np.any(util[kept] > util[idx] + 1e-9):
                dominated = True
                break
        if not dominated:
            keep.append(int(idx))
    return profiles[keep]


# ---------------------------------------------------------------------------
# grid certificate of equilibrium absence (two agents)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCertificate:
    step: float
    tolerance: float
    equilibrium_found: bool
    closest_profile: np.ndarray
    closest_deviation: float


def no_equilibrium_certificate(game: Game, step: float = 1e-3,
                               tolerance: float = 1e-3) -> GridCertificate:
    """Exhaustively test every grid profile of a two-agent game for equilibrium.

    A grid profile passes when each agent's kept share is within ``tolerance``
    of her best response. Best responses depend on one opponent coordinate
    only, which keeps the scan linear in the grid size.
    """
    if game.n_agents != 2:
        raise ValueError("the grid certificate is implemented for two-agent games")
    axis = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    br_cache: dict[tuple[int, float], float] = {}

    def br(i: int, other: float) -> float:
        key = (i, other)
        if key not in br_cache:
            y = np.array([other, other])
            br_cache[key] = bestresponse.best_response(game, i, y).keep
        return br_cache[key]

    closest = np.array([np.nan, np.nan])
    closest_dev = np.inf
    for v in axis:
        b1 = br(1, float(v))
        lo = max(0.0, b1 - tolerance)
        hi = min(1.0, b1 + tolerance)
        first = int(np.ceil((lo - 1e-12) / step))
        last = int(np.floor((hi + 1e-12) / step))
        for k in range(first, last + 1):
            w = float(axis[k]) if 0 <= k < len(axis) else None
            if w is None:
                continue
            dev0 = abs(br(0, w) - v)
            dev = max(dev0, abs(b1 - w))
            if dev < closest_dev:
                closest_dev = dev
                closest = np.array([v, w])
            if dev0 <= tolerance:
                return GridCertificate(step, tolerance, True, np.array([v, w]), dev)
    return GridCertificate(step, tolerance, False, closest, float(closest_dev))


# ---------------------------------------------------------------------------
# bailouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BailoutReport:
    donor: int
    recipient: int
    asset: int
    share: float
    before: EquilibriumReport
    after: EquilibriumReport
    game_after: Game

    def to_json(self) -> dict:
        return {
            "donor": self.donor,
            "recipient": self.recipient,
            "asset": self.asset,
            "share": self.share,
            "before": self.before.to_json(),
            "after": self.after.to_json(),
        }


def bailout_whatif(game: Game, donor: int, recipient: int, asset: int,
                   share: float) -> BailoutReport:
    """Transfer a holding share for free and compare maximal equilibria."""
    if donor == recipient:
        raise ValueError("donor and recipient must differ")
    if share < 0:
        raise ValueError("transfer share must be nonnegative")
    x = game.holdings
    if x[donor, asset] + 1e-12 < share:
        raise ValueError(
            f"agent {donor} holds {x[donor, asset]:.12g} of asset {asset}, "
            f"cannot transfer {share}")
    new_x = x.copy()
    new_x[donor, asset] -= share
    new_x[recipient, asset] += share
    after_game = game.with_holdings(new_x)
    before = maximal_equilibrium(game)
    after = maximal_equilibrium(after_game)
    return BailoutReport(donor, recipient, asset, share, before, after, after_game)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def coalition_to_csv_rows(deviation: CoalitionDeviation, n: int) -> list[list]:
    """Rows of (coalition bitmask, per-agent deviation, per-agent gain)."""
    mask = sum(1 << i for i in deviation.coalition)
    dev = ["" for _ in range(n)]
    gain = ["" for _ in range(n)]
    for pos, agent in enumerate(deviation.coalition):
        dev[agent] = repr(float(deviation.deviation[pos]))
        gain[agent] = repr(float(deviation.gains[pos]))
    return [[mask] + dev + gain]


def report_to_json_text(report: EquilibriumReport) -> str:
    return json.dumps(report.to_json(), indent=2)
