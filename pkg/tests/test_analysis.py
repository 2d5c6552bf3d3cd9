"""Analysis tests: equilibrium verification, lattice checks, coalitions, bailouts."""

import numpy as np
import pytest

from firesale import examples
from firesale.analysis import (
    UnsupportedRegimeError,
    bailout_whatif,
    coalition_scan,
    coalition_to_csv_rows,
    lattice_check,
    maximal_equilibrium,
    no_equilibrium_certificate,
    pareto_front_grid,
    social_optimum_scan,
    verify_equilibrium,
)
from firesale.dynamics import check_approx_equilibrium
from firesale.model import Game, LinearImpact, valuation_batch
from conftest import random_linear_game


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def test_verify_all_zero_equilibrium():
    game = examples.bad_equilibrium_game(10)
    report = verify_equilibrium(game, np.zeros(10))
    assert report.is_exact
    assert report.welfare == pytest.approx(0.0, abs=1e-12)
    assert all(s.value != "liquid" for s in report.statuses)


def test_verify_oscillator_top_equilibrium():
    game = examples.load_example("sync_oscillation")
    report = verify_equilibrium(game, np.array([1.0, 1.0]))
    assert report.is_exact
    assert np.allclose(report.leverages, 6.0, atol=1e-9)


def test_welfare_optimum_is_not_an_equilibrium_in_the_coalition_game():
    game = examples.load_example("bank_run_coalition")
    report = verify_equilibrium(game, np.array([0.25, 1.0]))
    assert not report.is_exact
    assert report.br_deviation == pytest.approx(0.25, abs=1e-6)  # agent 0 runs to zero


def test_exactness_implies_approximate_equilibrium(rng):
    for _ in range(10):
        game = random_linear_game(rng, n_max=5)
        top = maximal_equilibrium(game)
        assert top.is_exact
        for eps in (1e-6, 1e-4):
            assert check_approx_equilibrium(game, top.profile, eps).passed


# ---------------------------------------------------------------------------
# maximal equilibrium
# ---------------------------------------------------------------------------


def test_maximal_equilibrium_examples():
    convex = examples.load_example("seq_cycle_convex")
    assert np.allclose(maximal_equilibrium(convex).profile, 1.0, atol=1e-9)
    bad = examples.bad_equilibrium_game(10)
    top = maximal_equilibrium(bad)
    assert np.allclose(top.profile, 1.0, atol=1e-8)
    assert top.welfare == pytest.approx(5.0, abs=1e-9)
    cascade = examples.load_example("cascade")
    assert np.allclose(maximal_equilibrium(cascade).profile, 0.0, atol=1e-9)


def test_maximal_equilibrium_rejects_concave_shortfall_regime():
    game = examples.load_example("tipping_br")
    with pytest.raises(UnsupportedRegimeError):
        maximal_equilibrium(game)
    game2 = examples.load_example("no_equilibrium")
    with pytest.raises(UnsupportedRegimeError):
        lattice_check(game2)


# ---------------------------------------------------------------------------
# lattice structure
# ---------------------------------------------------------------------------


def test_lattice_meet_join_closure(rng):
    total_eq = 0
    for seed in range(6):
        game = random_linear_game(rng, n_max=4)
        diag = lattice_check(game, samples=12, seed=seed)
        assert diag.violations == ()
        total_eq += len(diag.equilibria)
    assert total_eq >= 6


def test_lattice_check_sits_below_the_maximal_equilibrium():
    game = examples.load_example("seq_cycle_convex")
    diag = lattice_check(game, samples=15, seed=3)
    top = maximal_equilibrium(game).profile
    for eq in diag.equilibria:
        assert np.all(eq <= top + 1e-9)


def test_maximal_equilibrium_has_top_welfare(rng):
    for seed in range(5):
        game = random_linear_game(rng, n_max=4)
        diag = lattice_check(game, samples=10, seed=seed)
        top = maximal_equilibrium(game)
        for eq in diag.equilibria:
            w = verify_equilibrium(game, eq).welfare
            assert top.welfare >= w - 1e-6


# ---------------------------------------------------------------------------
# coalitions
# ---------------------------------------------------------------------------


def test_coalition_scan_finds_the_bank_run_repair():
    game = examples.load_example("bank_run_coalition")
    top = maximal_equilibrium(game)
    hit = coalition_scan(game, top.profile, grid=51)
    assert hit is not None
    assert hit.coalition == (0, 1)
    assert np.all(hit.gains > 1e-9)
    rows = coalition_to_csv_rows(hit, game.n_agents)
    assert rows[0][0] == 0b11


def test_singleton_coalition_repairs_a_ruined_agent():
    game = examples.load_example("sync_oscillation")
    hit = coalition_scan(game, np.array([1.0, 0.0]), grid=21)
    assert hit is not None
    assert hit.coalition == (0,)
    assert hit.deviation[0] == pytest.approx(0.0, abs=1e-9)


def test_maximal_equilibrium_is_coalition_proof_under_post_sale_pricing(rng):
    for _ in range(8):
        game = random_linear_game(rng, n_max=3)
        top = maximal_equilibrium(game)
        assert coalition_scan(game, top.profile, grid=31, refine=False) is None


def test_lower_equilibria_admit_improving_coalitions():
    # Bistable games: keeping everything and selling everything are both
    # equilibria; every equilibrium below the maximal one must be open to a
    # coalition that jointly moves back up.
    found_pairs = 0
    for n, stake in [(2, 1.0), (3, 0.9), (3, 1.3), (2, 1.5), (3, 1.0)]:
        game = examples.bad_equilibrium_game(n, stake)
        diag = lattice_check(game, samples=8, seed=n)
        top = maximal_equilibrium(game).profile
        lower = [eq for eq in diag.equilibria if np.max(np.abs(eq - top)) > 1e-6]
        assert lower, "the all-zero trap equilibrium was not sampled"
        for eq in lower:
            hit = coalition_scan(game, eq, grid=51)
            assert hit is not None
            assert np.all(hit.gains > 1e-9)
            found_pairs += 1
    assert found_pairs >= 5


def test_coalition_scan_refuses_large_games(rng):
    game = random_linear_game(rng, n_max=8)
    if game.n_agents <= 4:
        return
    with pytest.raises(ValueError):
        coalition_scan(game, np.ones(game.n_agents))


# ---------------------------------------------------------------------------
# welfare scans and the grid certificate
# ---------------------------------------------------------------------------


def test_social_optimum_scan_bank_run_game():
    game = examples.load_example("bank_run_coalition")
    profile, welfare = social_optimum_scan(game, resolution=101)
    assert profile[0] == pytest.approx(0.25, abs=0.011)
    assert profile[1] == pytest.approx(1.0, abs=0.011)
    assert welfare == pytest.approx(3.5548828, abs=1e-3)


def test_pareto_front_contains_the_social_optimum():
    game = examples.load_example("bank_run_coalition")
    front = pareto_front_grid(game, resolution=21)
    util = valuation_batch(game, front).utility
    best = front[np.argmax(util.sum(axis=1))]
    assert best[0] == pytest.approx(0.25, abs=0.06)
    assert best[1] == pytest.approx(1.0, abs=0.06)


def test_grid_certificate_rejects_equilibria_on_the_cycling_game():
    game = examples.load_example("no_equilibrium")
    cert = no_equilibrium_certificate(game, step=0.01, tolerance=1e-3)
    assert not cert.equilibrium_found


def test_grid_certificate_confirms_an_equilibrium_when_present():
    game = examples.load_example("sync_oscillation")
    cert = no_equilibrium_certificate(game, step=0.05, tolerance=1e-3)
    assert cert.equilibrium_found
    assert np.allclose(cert.closest_profile, [0.0, 0.0])


def test_grid_certificate_needs_two_agents():
    game = examples.load_example("seq_cycle_convex")
    with pytest.raises(ValueError):
        no_equilibrium_certificate(game)


# ---------------------------------------------------------------------------
# bailouts
# ---------------------------------------------------------------------------


def test_bailout_example_reproduction():
    game = examples.load_example("bailout")
    report = bailout_whatif(game, 0, 1, 0, 0.1)
    assert report.before.equities[0] == pytest.approx(1000.64, abs=0.01)
    assert np.allclose(report.after.profile, [1.0, 1.0], atol=1e-9)
    assert report.after.equities[0] == pytest.approx(1000.7, abs=0.01)


def test_bailout_zero_share_is_identity():
    game = examples.load_example("bailout")
    report = bailout_whatif(game, 0, 1, 0, 0.0)
    assert np.allclose(report.before.profile, report.after.profile)
    assert np.allclose(report.before.equities, report.after.equities)


def test_bailout_rejects_transfers_beyond_holdings():
    game = examples.load_example("bailout")
    with pytest.raises(ValueError):
        bailout_whatif(game, 1, 0, 0, 0.5)  # agent 1 only holds 0.2


def test_full_transfer_effects_at_fixed_profile():
    game = examples.load_example("bailout")
    ones = np.ones(2)[None, :]
    before = valuation_batch(game, ones)
    moved = game.with_holdings(np.array([[0.0], [1.0]]))
    after = valuation_batch(moved, ones)
    # Donor parts with the asset's value, the recipient deleverages.
    assert after.equity[0, 0] <= before.equity[0, 0] + 1e-12
    assert after.leverage[0, 1] <= before.leverage[0, 1] + 1e-12
