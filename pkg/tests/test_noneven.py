"""Non-even sales: valuation reduction, tractable best response, cycle replay."""

import numpy as np
import pytest

from firesale import examples
from firesale.model import valuation_batch
from firesale.noneven import (
    as_vector_profile,
    best_response_noneven,
    from_even,
    improving_response_run,
    kept_amounts_noneven,
    social_welfare_noneven,
    utilities_noneven,
    valuation_noneven,
    vector_profile_from_csv,
    vector_profile_to_csv,
)
from conftest import random_linear_game, random_mixed_game


def test_constant_rows_reduce_to_even_valuation(rng):
    for _ in range(30):
        game = random_mixed_game(rng)
        y = rng.uniform(0, 1, game.n_agents)
        Y = from_even(y, game.n_assets)
        even = valuation_batch(game, y[None, :])
        for i in range(game.n_agents):
            vec = valuation_noneven(game, Y, i)
            assert vec.equity == pytest.approx(even.equity[0, i], rel=1e-12, abs=1e-12)
            assert vec.assets_value == pytest.approx(even.assets_value[0, i],
                                                     rel=1e-12, abs=1e-12)
            assert vec.utility == even.utility[0, i] or (
                vec.utility == pytest.approx(even.utility[0, i], rel=1e-12))


def test_kept_amounts_mix_rows_per_asset():
    game = examples.load_example("noneven_shift")
    Y = np.array([[1.0, 0.5], [0.2, 1.0]])
    kept = kept_amounts_noneven(game, Y)
    assert kept[0] == pytest.approx(0.5 * 1.0 + 0.5 * 0.2)
    assert kept[1] == pytest.approx(0.5 * 0.5 + 0.5 * 1.0)


def test_best_response_shift_cases():
    game = examples.load_example("noneven_shift")
    full = best_response_noneven(game, 0, from_even(np.ones(2), 2))
    assert full[0] == pytest.approx(0.925998, abs=1e-4)
    assert full[1] == pytest.approx(0.925997, abs=1e-4)
    sell = best_response_noneven(game, 0, np.array([[1.0, 1.0], [1.0, 0.8]]))
    assert sell[0] == pytest.approx(0.829974, abs=1e-4)
    assert sell[1] == pytest.approx(0.929974, abs=1e-4)
    assert sell[0] < full[0] and sell[1] > full[1]  # response is not monotone


def test_best_response_unconstrained_keeps_everything():
    game = examples.load_example("noneven_shift")
    # The deep-pocketed second agent never feels the cap.
    out = best_response_noneven(game, 1, from_even(np.ones(2), 2))
    assert np.allclose(out, 1.0)


def test_best_response_forced_liquidation():
    game = examples.load_example("sync_oscillation")
    # Opponent liquidation leaves no strategy with positive equity.
    Y = np.array([[1.0], [0.0]])
    out = best_response_noneven(game, 0, Y)
    assert np.allclose(out, 0.0)


def test_best_response_beats_random_feasible_vectors(rng):
    for _ in range(12):
        game = random_linear_game(rng, n_max=5)
        n, m = game.n_agents, game.n_assets
        Y = from_even(rng.uniform(0, 1, n), m)
        i = int(rng.integers(n))
        best = best_response_noneven(game, i, Y)
        x_i = game.holdings[i]
        p0 = game.initial_prices
        rest = kept_amounts_noneven(game, Y) - x_i * Y[i]
        beta = x_i * x_i * p0
        w = x_i * p0 * rest
        base = float(game.equity_base[i] + w.sum())
        aI = float(game.illiquid_assets[i])
        lam = game.leverage_cap
        cand = rng.uniform(0, 1, (100_000, m))
        equity = base + cand @ beta
        risky = aI + (cand * cand) @ beta + cand @ w
        feasible = (equity > 0) & (risky <= lam * equity + 1e-9)
        best_equity = base + float(beta @ best)
        if feasible.any():
            assert best_equity >= equity[feasible].max() - 1e-8
        else:
            assert np.allclose(best, 0.0) or best_equity > 0


def test_swopt_profile_valuations():
    game = examples.load_example("noneven_swopt")
    profile = np.array([[77.0 / 90.0, 0.9], [17.0 / 18.0, 1.0]])
    assert valuation_noneven(game, profile, 0).utility == pytest.approx(133.5, abs=1e-9)
    assert valuation_noneven(game, profile, 1).utility == pytest.approx(77.5, abs=1e-9)
    assert social_welfare_noneven(game, profile) == pytest.approx(211.0, abs=1e-9)


def test_swopt_deviation_and_answer():
    game = examples.load_example("noneven_swopt")
    profile = np.array([[77.0 / 90.0, 0.9], [17.0 / 18.0, 1.0]])
    br = best_response_noneven(game, 0, profile)
    assert br[0] == pytest.approx(0.516717, abs=1e-3)
    assert br[1] == pytest.approx(0.988939, abs=1e-3)
    deviated = profile.copy()
    deviated[0] = br
    assert valuation_noneven(game, deviated, 0).utility == pytest.approx(138.16, abs=0.05)
    assert np.isneginf(valuation_noneven(game, deviated, 1).utility)
    answer = best_response_noneven(game, 1, deviated)
    assert answer[0] == pytest.approx(0.62114, abs=1e-4)


def test_improving_cycle_replay():
    rep = examples.reproduce("noneven_cycle")
    assert rep.ok, rep.format()


def test_improving_run_records_gains():
    game = examples.load_example("noneven_swopt")
    start = np.array([[0.73541, 0.749823], [0.579619, 1.0]])
    trace = improving_response_run(game, start, [(1, (0.802502, 1.0))])
    assert trace.steps[0].agent == 1
    assert trace.steps[0].mover_gain == pytest.approx(74.2239 - 71.4379, abs=0.01)
    assert trace.utilities.shape == (2, 2)


def test_empty_schedule_is_a_trivial_trace():
    game = examples.load_example("noneven_swopt")
    start = from_even(np.ones(2), 2)
    trace = improving_response_run(game, start, [])
    assert trace.steps == ()
    assert trace.utilities.shape == (1, 2)


def test_vector_profile_validation_and_csv(tmp_path):
    game = examples.load_example("noneven_shift")
    Y = np.array([[0.2, 0.8], [1.0, 0.5]])
    as_vector_profile(Y, 2, 2)
    with pytest.raises(Exception):
        as_vector_profile(np.array([[1.5, 0.0], [0.0, 0.0]]), 2, 2)
    path = tmp_path / "profile.csv"
    vector_profile_to_csv(Y, path)
    back = vector_profile_from_csv(path, 2, 2)
    assert np.array_equal(back, Y)


def test_utilities_vector_marks_ruin():
    game = examples.load_example("noneven_swopt")
    # Keeping everything violates the first agent's cap at the start profile.
    util = utilities_noneven(game, from_even(np.ones(2), 2))
    assert np.isneginf(util[0])
    assert np.isfinite(util[1])
