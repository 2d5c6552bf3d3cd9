"""Fire-sale game model: leveraged agents holding overlapping asset portfolios.

A game consists of agents with illiquid assets, liabilities, and holdings in
liquid assets whose prices decay as the assets are sold. Each agent picks the
share of her portfolio she keeps; prices, equities, leverages, and utilities
follow from the joint profile of those choices.

All valuation functions are pure and operate on immutable ``Game`` objects, so
they are safe to call from concurrent workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

# Absolute tolerance used for constraint checks (leverage cap, holdings sums).
TOL = 1e-9

NEG_INF = float("-inf")


class GameError(ValueError):
    """Raised when game data violates an invariant."""


class GameSchemaError(GameError):
    """Raised by the JSON loader; carries the offending document location."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


# ---------------------------------------------------------------------------
# price impact
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearImpact:
    """Price proportional to the kept amount: price(k) = p0 * k."""

    p0: float

    def __post_init__(self):
        if not self.p0 > 0:
            raise GameError(f"initial price must be positive, got {self.p0}")

    def price(self, kept: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.p0 * np.asarray(kept, dtype=float)

    @property
    def is_linear(self) -> bool:
        return True

    @property
    def is_convex(self) -> bool:
        return True

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_json(self) -> dict:
        return {"kind": "linear"}


@dataclass(frozen=True)
class PowerImpact:
    """Convex power impact: price(k) = scale * k**exponent, exponent >= 1.

    The scale must equal the initial price so that price(1) == p0.
    """

    p0: float
    exponent: float
    scale: float

    def __post_init__(self):
        if not self.p0 > 0:
            raise GameError(f"initial price must be positive, got {self.p0}")
        if not self.exponent >= 1.0:
            raise GameError(f"exponent must be >= 1, got {self.exponent}")
        if not self.scale > 0:
            raise GameError(f"scale must be positive, got {self.scale}")
        if abs(self.scale - self.p0) > TOL * max(1.0, self.p0):
            raise GameError(
                f"scale {self.scale} must match p0 {self.p0} (price at full keep)"
            )

    def price(self, kept: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.scale * np.asarray(kept, dtype=float) ** self.exponent

    @property
    def is_linear(self) -> bool:
        return self.exponent == 1.0

    @property
    def is_convex(self) -> bool:
        return True

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def to_json(self) -> dict:
        return {"kind": "power_convex", "exponent": self.exponent, "scale": self.scale}


@dataclass(frozen=True)
class PiecewiseLinearImpact:
    """Piecewise-linear impact through explicit knots in kept-amount units.

    ``points`` is a sequence of (kept, price) knots covering [0, 1]; evaluation
    interpolates linearly between them. Knots must be strictly increasing in
    both coordinates and the last price must equal p0. The price at kept 0 is
    whatever the first knot says; a positive floor there is allowed, which is
    needed for tipping-point constructions.
    """

    p0: float
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.p0 > 0:
            raise GameError(f"initial price must be positive, got {self.p0}")
        pts = tuple((float(x), float(v)) for x, v in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise GameError("piecewise impact needs at least two knots")
        xs = np.array([x for x, _ in pts])
        vs = np.array([v for _, v in pts])
        if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1.0) > 1e-12:
            raise GameError("piecewise knots must cover the kept range [0, 1]")
        if np.any(np.diff(xs) <= 0):
            raise GameError("piecewise knots must be strictly increasing in kept amount")
        if np.any(np.diff(vs) <= 0):
            raise GameError("piecewise prices must be strictly increasing")
        if vs[0] < 0:
            raise GameError("piecewise prices must be nonnegative")
        if abs(vs[-1] - self.p0) > TOL * max(1.0, self.p0):
            raise GameError(f"price at full keep {vs[-1]} must equal p0 {self.p0}")
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_vs", vs)

    def price(self, kept: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return np.interp(np.asarray(kept, dtype=float), self._xs, self._vs)

    @property
    def is_linear(self) -> bool:
        return False

    @property
    def is_convex(self) -> bool:
        slopes = np.diff(self._vs) / np.diff(self._xs)
        return bool(np.all(np.diff(slopes) >= -1e-12))

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self._xs[1:-1])

    def to_json(self) -> dict:
        return {"kind": "piecewise_linear", "points": [list(p) for p in self.points]}


PriceImpact = Union[LinearImpact, PowerImpact, PiecewiseLinearImpact]


def impact_from_json(p0: float, spec: dict, where: str = "impact") -> PriceImpact:
    kind = spec.get("kind")
    try:
        if kind == "linear":
            return LinearImpact(p0)
        if kind == "power_convex":
            return PowerImpact(p0, float(spec["exponent"]), float(spec.get("scale", p0)))
        if kind == "piecewise_linear":
            pts = tuple((float(x), float(v)) for x, v in spec["points"])
            return PiecewiseLinearImpact(p0, pts)
    except KeyError as exc:
        raise GameSchemaError(f"missing field {exc}", where) from exc
    except GameError as exc:
        raise GameSchemaError(str(exc), where) from exc
    raise GameSchemaError(f"unknown impact kind {kind!r}", where)


# ---------------------------------------------------------------------------
# game
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Game:
    """Immutable description of a fire-sale game.

    Attributes:
        illiquid_assets: per-agent unsellable asset value, strictly positive.
        liabilities: per-agent external liabilities, nonnegative.
        holdings: (n, m) matrix of liquid holdings; column sums are at most 1.
        assets: per-asset price impact (carries the initial price p0).
        alpha: implementation shortfall in [0, 1]; the share of sales executed
            at post-impact prices.
        leverage_cap: maximal admissible ratio of risky assets to equity, > 1.
    """

    illiquid_assets: np.ndarray
    liabilities: np.ndarray
    holdings: np.ndarray
    assets: tuple[PriceImpact, ...]
    alpha: float
    leverage_cap: float

    def __post_init__(self):
        aI = np.ascontiguousarray(self.illiquid_assets, dtype=float)
        liab = np.ascontiguousarray(self.liabilities, dtype=float)
        x = np.ascontiguousarray(self.holdings, dtype=float)
        if x.ndim != 2:
            raise GameError("holdings must be a 2-d matrix (agents x assets)")
        n, m = x.shape
        if aI.shape != (n,) or liab.shape != (n,):
            raise GameError("illiquid_assets and liabilities must have one entry per agent")
        if len(self.assets) != m:
            raise GameError(f"{len(self.assets)} assets declared but holdings have {m} columns")
        if not np.all(aI > 0):
            raise GameError("every agent needs strictly positive illiquid assets")
        if not np.all(liab >= 0):
            raise GameError("liabilities must be nonnegative")
        if np.any(x < -TOL) or np.any(x > 1 + TOL):
            raise GameError("holdings entries must lie in [0, 1]")
        col = x.sum(axis=0)
        if np.any(col > 1 + TOL):
            j = int(np.argmax(col))
            raise GameError(f"asset {j} is oversubscribed: holdings sum to {col[j]:.12g} > 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise GameError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.leverage_cap > 1.0:
            raise GameError(f"leverage cap must exceed 1, got {self.leverage_cap}")
        for arr in (aI, liab, x):
            arr.flags.writeable = False
        object.__setattr__(self, "illiquid_assets", aI)
        object.__setattr__(self, "liabilities", liab)
        object.__setattr__(self, "holdings", x)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "leverage_cap", float(self.leverage_cap))
        p0 = np.array([a.p0 for a in self.assets])
        p0.flags.writeable = False
        object.__setattr__(self, "_p0", p0)
        eb = aI - liab
        eb.flags.writeable = False
        object.__setattr__(self, "_equity_base", eb)
        oq = (x * x) @ p0
        oq.flags.writeable = False
        object.__setattr__(self, "_own_quad", oq)
        object.__setattr__(self, "_all_linear", all(a.is_linear for a in self.assets))
        object.__setattr__(self, "_all_convex", all(a.is_convex for a in self.assets))

    # -- shape and derived data ------------------------------------------------

    @property
    def n_agents(self) -> int:
        return self.holdings.shape[0]

    @property
    def n_assets(self) -> int:
        return self.holdings.shape[1]

    @property
    def initial_prices(self) -> np.ndarray:
        return self._p0

    @property
    def equity_base(self) -> np.ndarray:
        """Per-agent illiquid assets net of liabilities."""
        return self._equity_base

    @property
    def own_quadratic(self) -> np.ndarray:
        """Per-agent sum_j x_ij^2 * p0_j, the own-price-impact curvature."""
        return self._own_quad

    @property
    def all_linear(self) -> bool:
        return self._all_linear

    @property
    def all_convex(self) -> bool:
        return self._all_convex

    @property
    def post_sale_pricing(self) -> bool:
        """True when sales settle fully at post-impact prices (alpha == 1)."""
        return self.alpha == 1.0

    # -- pricing ----------------------------------------------------------------

    def prices_at(self, kept: np.ndarray) -> np.ndarray:
        """Evaluate all price impacts at kept amounts, last axis indexing assets."""
        kept = np.asarray(kept, dtype=float)
        out = np.empty_like(kept)
        for j, asset in enumerate(self.assets):
            out[..., j] = asset.price(kept[..., j])
        return out

    def with_holdings(self, holdings: np.ndarray) -> "Game":
        return Game(self.illiquid_assets, self.liabilities, holdings,
                    self.assets, self.alpha, self.leverage_cap)

    # -- serialization ------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "agents": [
                {
                    "illiquid_assets": float(self.illiquid_assets[i]),
                    "liabilities": float(self.liabilities[i]),
                    "holdings": [float(v) for v in self.holdings[i]],
                }
                for i in range(self.n_agents)
            ],
            "assets": [
                {"p0": float(a.p0), "impact": a.to_json()} for a in self.assets
            ],
            "alpha": self.alpha,
            "lambda": self.leverage_cap,
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def game_from_json(doc: dict) -> Game:
    """Build a Game from a parsed JSON document, reporting the offending path."""
    if not isinstance(doc, dict):
        raise GameSchemaError("top-level document must be an object", "$")
    for key in ("agents", "assets", "alpha", "lambda"):
        if key not in doc:
            raise GameSchemaError(f"missing required field {key!r}", "$")
    agents = doc["agents"]
    assets = doc["assets"]
    if not isinstance(agents, list) or not agents:
        raise GameSchemaError("must be a nonempty list", "$.agents")
    if not isinstance(assets, list) or not assets:
        raise GameSchemaError("must be a nonempty list", "$.assets")
    m = len(assets)
    aI, liab, rows = [], [], []
    for i, agent in enumerate(agents):
        where = f"$.agents[{i}]"
        if not isinstance(agent, dict):
            raise GameSchemaError("agent must be an object", where)
        try:
            aI.append(float(agent["illiquid_assets"]))
            liab.append(float(agent["liabilities"]))
            row = [float(v) for v in agent["holdings"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GameSchemaError(f"bad agent record: {exc}", where) from exc
        if len(row) != m:
            raise GameSchemaError(
                f"holdings have {len(row)} entries, expected {m}", where + ".holdings")
        rows.append(row)
    impacts = []
    for j, asset in enumerate(assets):
        where = f"$.assets[{j}]"
        if not isinstance(asset, dict) or "p0" not in asset or "impact" not in asset:
            raise GameSchemaError("asset must be an object with p0 and impact", where)
        impacts.append(impact_from_json(float(asset["p0"]), asset["impact"], where + ".impact"))
    try:
        return Game(np.array(aI), np.array(liab), np.array(rows),
                    tuple(impacts), float(doc["alpha"]), float(doc["lambda"]))
    except GameError as exc:
        raise GameSchemaError(str(exc), "$") from exc


def load_game(path: Union[str, Path]) -> Game:
    """Load and validate a game file, with line/path diagnostics on failure."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameSchemaError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from exc
    return game_from_json(doc)


# ---------------------------------------------------------------------------
# profiles and valuation
# ---------------------------------------------------------------------------

Profile = np.ndarray  # shape (n,), every entry the kept share in [0, 1]


def as_profile(y: Sequence[float], n: int) -> Profile:
    """Validate and convert a strategy profile."""
    arr = np.asarray(y, dtype=float)
    if arr.shape != (n,):
        raise GameError(f"profile must have shape ({n},), got {arr.shape}")
    if np.any(arr < -TOL) or np.any(arr > 1 + TOL):
        raise GameError("profile entries must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


class AgentStatus(Enum):
    LIQUID = "liquid"
    ILLIQUID = "illiquid"
    INSOLVENT = "insolvent"


@dataclass(frozen=True)
class AgentValuation:
    """Snapshot of one agent's balance sheet under a strategy profile."""

    agent: int
    assets_value: float
    revenue: float
    equity: float
    leverage: Optional[float]
    status: Optional[AgentStatus]
    utility: float


def kept_amount(game: Game, y: Profile, j: int) -> float:
    """Total amount of asset j not sold under profile y."""
    return float(game.holdings[:, j] @ y)


def kept_amounts(game: Game, y: Profile) -> np.ndarray:
    return y @ game.holdings


def price(game: Game, y: Profile, j: int) -> float:
    """Post-sale price of asset j under profile y."""
    return float(game.assets[j].price(kept_amount(game, y, j)))


def prices(game: Game, y: Profile) -> np.ndarray:
    return game.prices_at(kept_amounts(game, y))


@dataclass(frozen=True)
class ValuationArrays:
    """Vectorized valuation of a batch of profiles, shape (B, n) per field."""

    kept: np.ndarray
    prices: np.ndarray
    assets_value: np.ndarray
    revenue: np.ndarray
    equity: np.ndarray
    leverage: np.ndarray  # nan where equity <= 0
    feasible: np.ndarray  # equity > 0 and leverage within cap
    utility: np.ndarray  # -inf where a nonzero strategy is infeasible


def valuation_batch(game: Game, profiles: np.ndarray) -> ValuationArrays:
    """Evaluate many profiles at once; ``profiles`` has shape (B, n)."""
    Y = np.atleast_2d(np.asarray(profiles, dtype=float))
    x = game.holdings
    kept = Y @ x
    p = game.prices_at(kept)
    value = p @ x.T  # (B, n): market value of each agent's full liquid book
    assets_value = game.illiquid_assets + Y * value
    pre = x @ game.initial_prices
    revenue = (1.0 - Y) * ((1.0 - game.alpha) * pre + game.alpha * value)
    equity = assets_value + revenue - game.liabilities
    with np.errstate(divide="ignore", invalid="ignore"):
        leverage = np.where(equity > 0, assets_value / np.where(equity > 0, equity, 1.0), np.nan)
    feasible = (equity > 0) & (leverage <= game.leverage_cap + TOL)
    utility = np.where(feasible | (Y == 0.0), equity, NEG_INF)
    return ValuationArrays(kept, p, assets_value, revenue, equity, leverage, feasible, utility)


def equity_array(game: Game, y: Profile) -> np.ndarray:
    return valuation_batch(game, y[None, :]).equity[0]


def utility_array(game: Game, y: Profile) -> np.ndarray:
    return valuation_batch(game, y[None, :]).utility[0]


def leverage_array(game: Game, y: Profile) -> np.ndarray:
    return valuation_batch(game, y[None, :]).leverage[0]


def valuation(game: Game, y: Profile, i: int, probe_status: bool = True) -> AgentValuation:
    """Full balance-sheet snapshot of agent i under profile y.

    The liquidity/solvency status needs a feasibility probe over the agent's
    own strategy; pass ``probe_status=False`` to skip it in hot loops.
    """
    va = valuation_batch(game, y[None, :])
    e = float(va.equity[0, i])
    lev = float(va.leverage[0, i]) if e > 0 else None
    status = None
    if probe_status:
        from . import bestresponse

        status = bestresponse.agent_status(game, i, y)
    return AgentValuation(
        agent=i,
        assets_value=float(va.assets_value[0, i]),
        revenue=float(va.revenue[0, i]),
        equity=e,
        leverage=lev,
        status=status,
        utility=float(va.utility[0, i]),
    )


def social_welfare(game: Game, y: Profile) -> float:
    """Utilitarian welfare: the sum of utilities, -inf as soon as any agent's is."""
    util = utility_array(game, y)
    if np.any(np.isneginf(util)):
        return NEG_INF
    return float(util.sum())
