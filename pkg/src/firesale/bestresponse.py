"""Best responses: exact (closed form, dichotomy, numeric scan) and simplified.

Under post-sale pricing (alpha == 1) an agent's equity is monotone in her own
kept share, so the best response is the largest share satisfying the leverage
cap, or full liquidation when none does. With linear impact that threshold is
the root of a quadratic; otherwise it is found by a downward scan plus
bisection. Under convex impact the equity is convex in the own share and the
best response is one of {0, largest feasible share}. Everything else falls
back to a grid scan with tipping-point candidates injected.

The simplified response ignores the agent's own price impact and has a closed
form; it is only defined for post-sale pricing with linear impact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .model import (
    TOL,
    NEG_INF,
    AgentStatus,
    Game,
    Profile,
    kept_amounts,
)

# Default resolutions; all reachable through keyword arguments and the CLI.
YMAX_GRID = 1024
SCAN_GRID = 4096
REFINE_TOL = 1e-10
BISECT_WIDTH = 1e-12
TIE_TOL = 1e-9


class BRMethod(Enum):
    CLOSED_FORM_QUADRATIC = "closed_form_quadratic"
    CONVEX_DICHOTOMY = "convex_dichotomy"
    NUMERIC_SCAN = "numeric_scan"
    SIMPLIFIED = "simplified"


@dataclass(frozen=True)
class BestResponseResult:
    keep: float
    utility: float
    feasible: bool  # whether any strategy satisfies the leverage cap
    method: BRMethod


@dataclass(frozen=True)
class SimplifiedQuantities:
    """Inputs of the simplified response for one agent.

    holdings_value is the market value of the agent's full liquid book at the
    current prices; target_keep is the kept share at which the leverage cap
    binds when the own price impact is ignored (None when holdings_value is 0).
    """

    holdings_value: float
    target_keep: Optional[float]


# ---------------------------------------------------------------------------
# own-coordinate evaluation
# ---------------------------------------------------------------------------


def own_curves(game: Game, i: int, y: Profile, keeps: np.ndarray):
    """Equity and risky-asset curves of agent i as her own kept share varies.

    Returns (assets_value, equity) arrays over ``keeps`` with the other
    agents' strategies frozen at y.
    """
    x_i = game.holdings[i]
    rest = kept_amounts(game, y) - x_i * y[i]
    kept = rest[None, :] + np.outer(keeps, x_i)
    p = game.prices_at(kept)
    value = p @ x_i
    assets_value = game.illiquid_assets[i] + keeps * value
    pre = float(x_i @ game.initial_prices)
    revenue = (1.0 - keeps) * ((1.0 - game.alpha) * pre + game.alpha * value)
    equity = assets_value + revenue - game.liabilities[i]
    return assets_value, equity


def own_utilities(game: Game, i: int, y: Profile, keeps: np.ndarray) -> np.ndarray:
    """Utility of agent i over candidate kept shares, -inf where infeasible."""
    assets_value, equity = own_curves(game, i, y, keeps)
    lam = game.leverage_cap
    ok = (equity > 0) & (assets_value <= (lam + TOL) * equity)
    return np.where(ok | (keeps == 0.0), equity, NEG_INF)


def _feasible_mask(game: Game, i: int, y: Profile, keeps: np.ndarray) -> np.ndarray:
    assets_value, equity = own_curves(game, i, y, keeps)
    return (equity > 0) & (assets_value <= (game.leverage_cap + TOL) * equity)


# ---------------------------------------------------------------------------
# maximal feasible keep
# ---------------------------------------------------------------------------


def linear_coefficients(game: Game, i: int, y: Profile):
    """(own_quad, rest_value, equity_base) of the linear post-sale equity.

    With alpha == 1 and linear impact, equity(t) = base + own_quad * t +
    rest_value and risky assets(t) = illiquid + own_quad * t^2 + rest_value * t,
    where t is the agent's own kept share.
    """
    x_i = game.holdings[i]
    rest = kept_amounts(game, y) - x_i * y[i]
    rest_value = float((x_i * game.initial_prices) @ rest)
    return float(game.own_quadratic[i]), rest_value, float(game.equity_base[i])


def _ymax_quadratic(game: Game, i: int, y: Profile) -> Optional[float]:
    """Closed-form maximal feasible keep for alpha == 1 with linear impact."""
    A, W, c = linear_coefficients(game, i, y)
    lam = game.leverage_cap
    aI = float(game.illiquid_assets[i])
    if A <= 0.0:
        # No liquid holdings: the cap does not depend on the own share.
        if c > 0 and aI <= lam * (c + W) + TOL:
            return 1.0
        return None
    B = W - lam * A
    C = aI - lam * (c + W)
    disc = B * B - 4.0 * A * C
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    r_hi = (-B + sq) / (2.0 * A)
    r_lo = (-B - sq) / (2.0 * A)
    ymax = min(1.0, r_hi)
    if ymax < max(0.0, r_lo) - 1e-12 or ymax < -1e-12:
        return None
    ymax = max(0.0, ymax)
    if c + A * ymax + W <= 0:
        return None
    return ymax


def _ymax_scan(game: Game, i: int, y: Profile, grid: int) -> Optional[float]:
    """Maximal feasible keep by downward scan plus bisection of the boundary."""
    keeps = np.linspace(0.0, 1.0, grid + 1)
    ok = _feasible_mask(game, i, y, keeps)
    if not ok.any():
        return None
    k = int(np.nonzero(ok)[0][-1])
    if k == grid:
        return 1.0
    lo, hi = keeps[k], keeps[k + 1]  # feasible at lo, infeasible at hi
    while hi - lo > BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if bool(_feasible_mask(game, i, y, np.array([mid]))[0]):
            lo = mid
        else:
            hi = mid
    return float(lo)


def max_feasible_keep(game: Game, i: int, y: Profile, grid: int = YMAX_GRID) -> Optional[float]:
    """Largest own kept share with positive equity and leverage within the cap.

    Returns None when no such share exists. The entry y[i] is ignored.
    """
    if game.post_sale_pricing and game.all_linear:
        return _ymax_quadratic(game, i, y)
    return _ymax_scan(game, i, y, grid)


def agent_status(game: Game, i: int, y: Profile, grid: int = YMAX_GRID) -> AgentStatus:
    """Classify agent i given the others' strategies in y.

    Insolvent: no own share yields positive equity. Illiquid: positive equity
    is possible but the leverage cap cannot be met. Liquid otherwise.
    """
    if max_feasible_keep(game, i, y, grid) is not None:
        return AgentStatus.LIQUID
    if game.post_sale_pricing:
        # Equity is monotone in the own share, so its maximum sits at 1.
        _, equity = own_curves(game, i, y, np.array([1.0]))
        solvent = bool(equity[0] > 0)
    else:
        keeps = np.linspace(0.0, 1.0, grid + 1)
        _, equity = own_curves(game, i, y, keeps)
        solvent = bool(equity.max() > 0)
    return AgentStatus.ILLIQUID if solvent else AgentStatus.INSOLVENT


# ---------------------------------------------------------------------------
# exact best response
# ---------------------------------------------------------------------------


def _utility_at(game: Game, i: int, y: Profile, t: float) -> float:
    return float(own_utilities(game, i, y, np.array([t]))[0])


def _golden_refine(game: Game, i: int, y: Profile, lo: float, hi: float) -> float:
    """Golden-section maximization of the own utility on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = _utility_at(game, i, y, c)
    fd = _utility_at(game, i, y, d)
    while b - a > REFINE_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _utility_at(game, i, y, c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _utility_at(game, i, y, d)
    return 0.5 * (a + b)


def _breakpoint_candidates(game: Game, i: int, y: Profile) -> list[float]:
    """Own kept shares at which some asset's total sales hit a price knot."""
    x_i = game.holdings[i]
    rest = kept_amounts(game, y) - x_i * y[i]
    out = []
    for j, asset in enumerate(game.assets):
        if x_i[j] <= 1e-15:
            continue
        for knot in asset.breakpoints():
            t = (knot - rest[j]) / x_i[j]
            if -1e-12 <= t <= 1 + 1e-12:
                out.append(min(1.0, max(0.0, float(t))))
    return out


def _scan_best_response(game: Game, i: int, y: Profile, grid: int,
                        ymax: Optional[float]) -> tuple[float, float]:
    keeps = np.linspace(0.0, 1.0, grid)
    extra = _breakpoint_candidates(game, i, y)
    if ymax is not None:
        extra.append(ymax)
    if extra:
        keeps = np.unique(np.concatenate([keeps, np.asarray(extra)]))
    util = own_utilities(game, i, y, keeps)
    best = float(util.max())
    near = np.nonzero(util >= best - TIE_TOL)[0]
    t_star = float(keeps[near[-1]])  # ties go to the largest keep
    # Refine inside the cell around the best grid point.
    k = int(near[-1])
    lo = float(keeps[max(0, k - 1)])
    hi = float(keeps[min(len(keeps) - 1, k + 1)])
    refined = _golden_refine(game, i, y, lo, hi)
    candidates = [t_star, refined, 0.0, 1.0] + extra
    values = [(t, _utility_at(game, i, y, t)) for t in candidates]
    top = max(v for _, v in values)
    keep = max(t for t, v in values if v >= top - TIE_TOL)
    return keep, _utility_at(game, i, y, keep)


def best_response(game: Game, i: int, y: Profile, grid: int = SCAN_GRID,
                  ymax_grid: int = YMAX_GRID) -> BestResponseResult:
    """Utility-maximizing own kept share of agent i against y[-i].

    Ties within 1e-9 of the maximal utility are broken in favor of the
    largest kept share. The entry y[i] is ignored.
    """
    ymax = max_feasible_keep(game, i, y, ymax_grid)
    feasible = ymax is not None
    if game.post_sale_pricing:
        # Equity rises with the kept share, so keep as much as the cap allows.
        keep = ymax if feasible else 0.0
        method = (BRMethod.CLOSED_FORM_QUADRATIC if game.all_linear
                  else BRMethod.CONVEX_DICHOTOMY)
        return BestResponseResult(keep, _utility_at(game, i, y, keep), feasible, method)
    if game.all_convex:
        # Convex equity in the own share: an optimum sits at 0 or at ymax.
        if not feasible:
            return BestResponseResult(0.0, _utility_at(game, i, y, 0.0), False,
                                      BRMethod.CONVEX_DICHOTOMY)
        u_max = _utility_at(game, i, y, ymax)
        u_zero = _utility_at(game, i, y, 0.0)
        keep, util = (ymax, u_max) if u_max >= u_zero - TIE_TOL else (0.0, u_zero)
        return BestResponseResult(keep, util, True, BRMethod.CONVEX_DICHOTOMY)
    keep, util = _scan_best_response(game, i, y, grid, ymax)
    return BestResponseResult(keep, util, feasible, BRMethod.NUMERIC_SCAN)


# ---------------------------------------------------------------------------
# simplified best response
# ---------------------------------------------------------------------------


def _require_simplified_regime(game: Game) -> None:
    if not (game.post_sale_pricing and game.all_linear):
        raise ValueError("the simplified response requires alpha == 1 and linear impact")


def simplified_quantities(game: Game, i: int, y: Profile) -> SimplifiedQuantities:
    value = float(game.holdings[i] @ (game.initial_prices * kept_amounts(game, y)))
    if value <= 0.0:
        return SimplifiedQuantities(value, None)
    lam = game.leverage_cap
    aI = float(game.illiquid_assets[i])
    li = float(game.liabilities[i])
    g = lam - (lam * li - (lam - 1.0) * aI) / value
    return SimplifiedQuantities(value, g)


def simplified_best_response(game: Game, i: int, y: Profile) -> float:
    """Largest kept share meeting the cap when the own price impact is ignored.

    Zero when the agent's equity at y is not positive. When the agent's liquid
    book is worthless at the current prices, the cap reduces to a condition
    that no longer depends on the own share; keep everything if it holds.
    """
    _require_simplified_regime(game)
    q = simplified_quantities(game, i, y)
    equity = float(game.equity_base[i]) + q.holdings_value
    if equity <= 0.0:
        return 0.0
    if q.target_keep is None:
        aI = float(game.illiquid_assets[i])
        cap_ok = aI <= game.leverage_cap * float(game.equity_base[i]) + TOL
        return 1.0 if cap_ok else 0.0
    return min(1.0, max(0.0, q.target_keep))


# ---------------------------------------------------------------------------
# profile maps
# ---------------------------------------------------------------------------


def exact_profile_map(game: Game, y: Profile) -> Profile:
    """Apply every agent's exact best response simultaneously."""
    if game.post_sale_pricing and game.all_linear:
        return _exact_profile_linear(game, y)
    return np.array([best_response(game, i, y).keep for i in range(game.n_agents)])


def _exact_profile_linear(game: Game, y: Profile) -> Profile:
    """Vectorized closed-form update for alpha == 1 with linear impact."""
    x = game.holdings
    p0 = game.initial_prices
    lam = game.leverage_cap
    value = (p0 * kept_amounts(game, y)) @ x.T  # V_i(y)
    A = game.own_quadratic
    W = value - A * y
    c = game.equity_base
    aI = game.illiquid_assets
    out = np.zeros(game.n_agents)
    # Degenerate agents without liquid holdings: cap independent of own share.
    flat = A <= 0.0
    if flat.any():
        ok = flat & (c > 0) & (aI <= lam * (c + W) + TOL)
        out[ok] = 1.0
    quad = ~flat
    if quad.any():
        Aq, Wq, cq, aq = A[quad], W[quad], c[quad], aI[quad]
        B = Wq - lam * Aq
        C = aq - lam * (cq + Wq)
        disc = B * B - 4.0 * Aq * C
        has_root = disc >= 0
        sq = np.sqrt(np.where(has_root, disc, 0.0))
        r_hi = (-B + sq) / (2.0 * Aq)
        r_lo = (-B - sq) / (2.0 * Aq)
        ymax = np.minimum(1.0, r_hi)
        ok = (has_root
              & (ymax >= np.maximum(0.0, r_lo) - 1e-12)
              & (ymax >= -1e-12)
              & (cq + Aq * np.maximum(0.0, ymax) + Wq > 0))
        out[quad] = np.where(ok, np.clip(ymax, 0.0, 1.0), 0.0)
    return out


def simplified_profile_map(game: Game, y: Profile) -> Profile:
    """Apply every agent's simplified response simultaneously."""
    _require_simplified_regime(game)
    x = game.holdings
    p0 = game.initial_prices
    lam = game.leverage_cap
    value = (p0 * kept_amounts(game, y)) @ x.T
    equity = game.equity_base + value
    aI = game.illiquid_assets
    li = game.liabilities
    with np.errstate(divide="ignore", invalid="ignore"):
        g = lam - (lam * li - (lam - 1.0) * aI) / np.where(value > 0, value, 1.0)
    target = np.clip(g, 0.0, 1.0)
    flat_ok = aI <= lam * game.equity_base + TOL
    target = np.where(value > 0, target, np.where(flat_ok, 1.0, 0.0))
    return np.where(equity > 0, target, 0.0)


def best_response_profile(game: Game, y: Profile, kind: str = "exact") -> Profile:
    """Component-wise best-response profile, kind in {"exact", "simplified"}."""
    if kind == "exact":
        return exact_profile_map(game, y)
    if kind == "simplified":
        return simplified_profile_map(game, y)
    raise ValueError(f"unknown best-response kind {kind!r}")
