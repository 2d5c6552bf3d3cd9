"""Shared samplers for randomized property tests.

All tests draw from seeded generators so the suite is deterministic.
"""

from __future__ import annotations

import numpy as np
import pytest

from firesale.model import Game, LinearImpact, PiecewiseLinearImpact, PowerImpact


def random_holdings(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    raw = rng.uniform(0.05, 1.0, (n, m))
    fill = rng.uniform(0.4, 1.0, m)  # column sums, at most 1
    return raw / raw.sum(axis=0) * fill


def _finish_game(rng, n, m, impacts, alpha, p0):
    """Draw balance sheets and a cap strictly between 1 and the initial leverage."""
    for _ in range(200):
        aI = rng.uniform(80, 120, n)
        liab = rng.uniform(40, 60, n)
        x = random_holdings(rng, n, m)
        assets = tuple(impacts(p) for p in p0)
        ones = np.ones(n)
        kept = ones @ x
        prices = np.array([a.price(k) for a, k in zip(assets, kept)])
        value = x @ prices
        equity = aI - liab + value
        if not np.all(equity > 0):
            continue
        top = float(np.max((aI + value) / equity))
        cap = rng.uniform(0.6, 0.95) * top
        if cap <= 1.02:
            continue
        return Game(aI, liab, x, assets, alpha, cap)
    raise RuntimeError("game sampler failed to produce an instance")


def random_linear_game(rng: np.random.Generator, n_max: int = 8) -> Game:
    """Post-sale pricing with linear impact (the closed-form regime)."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, n + 1))
    p0 = rng.uniform(50, 150, m)
    return _finish_game(rng, n, m, LinearImpact, 1.0, p0)


def random_convex_game(rng: np.random.Generator, n_max: int = 4,
                       alpha: float | None = None) -> Game:
    """Strictly convex power impact with interior implementation shortfall."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, n + 1))
    p0 = rng.uniform(50, 150, m)
    exponent = float(rng.uniform(1.2, 3.0))
    a = float(rng.uniform(0.1, 0.9)) if alpha is None else alpha
    return _finish_game(rng, n, m, lambda p: PowerImpact(p, exponent, p), a, p0)


def random_mixed_game(rng: np.random.Generator, n_max: int = 5) -> Game:
    """Arbitrary shortfall with a random mix of impact shapes per asset."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, n + 1))
    p0 = rng.uniform(50, 150, m)
    alpha = float(rng.uniform(0.0, 1.0))

    def impact(p):
        kind = rng.integers(3)
        if kind == 0:
            return LinearImpact(p)
        if kind == 1:
            return PowerImpact(p, float(rng.uniform(1.0, 3.0)), p)
        knee = float(rng.uniform(0.2, 0.8))
        lift = float(rng.uniform(knee, 1.0))  # concave kink
        return PiecewiseLinearImpact(p, ((0.0, 0.0), (knee, lift * p), (1.0, p)))

    return _finish_game(rng, n, m, impact, alpha, p0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
