"""Bundled example games and scripted reproduction scenarios.

Every registry entry maps to a shipped game file plus an expected-output
fixture; ``reproduce`` runs the scenario and compares each quantity at its
documented tolerance. The scenarios cover the library end to end: oscillating
synchronous dynamics, a sequential cycle under convex impact, a full fire-sale
cascade, tipping-point best responses under concave impact, a game without
equilibria, a bank-run coalition game, degenerate all-zero equilibria, an
asset-transfer bailout, and the non-even sales examples.
"""

from __future__ import annotations

import importlib.resources as resources
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import analysis, bestresponse, dynamics, noneven
from .model import Game, LinearImpact, game_from_json, valuation_batch
from .dynamics import DynamicsConfig, DynamicsKind, Verdict

NEG_INF = float("-inf")


@dataclass(frozen=True)
class CheckRow:
    label: str
    computed: float
    expected: float
    tol: float
    passed: bool


@dataclass
class ReproductionReport:
    example_id: str
    rows: list[CheckRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.rows)

    def check(self, label: str, computed: float, expected: float, tol: float) -> None:
        computed = float(computed)
        expected = float(expected)
        if math.isinf(expected) or math.isinf(computed):
            passed = computed == expected
        else:
            passed = abs(computed - expected) <= tol
        self.rows.append(CheckRow(label, computed, expected, tol, passed))

    def check_flag(self, label: str, flag: bool) -> None:
        self.rows.append(CheckRow(label, float(flag), 1.0, 0.0, bool(flag)))

    def format(self) -> str:
        lines = [f"reproduce {self.example_id}: {'PASS' if self.ok else 'FAIL'}"]
        for r in self.rows:
            mark = "ok " if r.passed else "FAIL"
            if math.isinf(r.expected):
                lines.append(f"  [{mark}] {r.label}: {r.computed!r} (expected {r.expected!r})")
            else:
                lines.append(f"  [{mark}] {r.label}: {r.computed:.6f} "
                             f"(expected {r.expected:.6f} +- {r.tol:g})")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_FILE_BACKED = {
    "cascade": "cascade.json",
    "sync_oscillation": "sync_oscillation.json",
    "seq_cycle_convex": "seq_cycle_convex.json",
    "tipping_br": "tipping_br.json",
    "no_equilibrium": "no_equilibrium.json",
    "bank_run_coalition": "bank_run_coalition.json",
    "bailout": "bailout.json",
    "noneven_shift": "noneven_shift.json",
    "noneven_swopt": "noneven_swopt.json",
    "noneven_cycle": "noneven_swopt.json",
}

EXAMPLE_IDS = tuple(_FILE_BACKED) + ("bad_equilibrium",)


def bad_equilibrium_game(n: int = 10, illiquid: float = 1.0) -> Game:
    """n symmetric agents in one asset, capped exactly at their initial leverage.

    Keeping everything is the welfare-optimal equilibrium; selling everything
    is another equilibrium in which every agent is stuck at zero welfare.
    """
    holdings = np.full((n, 1), 1.0 / n)
    asset = LinearImpact(n / 2.0)
    cap = 2.0 * illiquid + 1.0
    return Game(np.full(n, illiquid), np.full(n, illiquid), holdings,
                (asset,), 1.0, cap)


def load_example(example_id: str, n: int = 10) -> Game:
    """Load a bundled example game; ``n`` only applies to bad_equilibrium."""
    if example_id == "bad_equilibrium":
        return bad_equilibrium_game(n)
    try:
        name = _FILE_BACKED[example_id]
    except KeyError:
        raise KeyError(f"unknown example id {example_id!r}; "
                       f"known: {', '.join(EXAMPLE_IDS)}") from None
    import json

    text = resources.files("firesale.data").joinpath(name).read_text()
    return game_from_json(json.loads(text))


def example_path(example_id: str):
    """Filesystem path of the bundled game file (for CLI consumption)."""
    return resources.files("firesale.data").joinpath(_FILE_BACKED[example_id])


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def _reproduce_sync_oscillation() -> ReproductionReport:
    rep = ReproductionReport("sync_oscillation")
    game = load_example("sync_oscillation")
    trace = dynamics.run_dynamics(game, DynamicsConfig(
        kind=DynamicsKind.SYNCHRONOUS_EXACT, start=(1.0, 0.0)))
    rep.check_flag("synchronous run detects a cycle", trace.verdict == Verdict.CYCLE_DETECTED)
    if trace.cycle is not None:
        rep.check("cycle period", trace.cycle.period, 2, 0)
        states = {tuple(np.round(s, 9)) for s in trace.cycle.states}
        rep.check_flag("cycle states are (0,1) and (1,0)",
                       states == {(0.0, 1.0), (1.0, 0.0)})
    seq = dynamics.run_dynamics(game, DynamicsConfig(
        kind=DynamicsKind.SEQUENTIAL_EXACT, start=(1.0, 0.0)))
    rep.check_flag("sequential run converges", seq.verdict == Verdict.CONVERGED)
    rep.check_flag("sequential run needs at most two moves", seq.steps <= 2)
    report = analysis.verify_equilibrium(game, np.array([1.0, 1.0]))
    rep.check_flag("all-ones is an exact equilibrium", report.is_exact)
    rep.check("leverage of agent 0 at all-ones", report.leverages[0], 6.0, 1e-9)
    rep.check("leverage of agent 1 at all-ones", report.leverages[1], 6.0, 1e-9)
    return rep


_CONVEX_CYCLE_STATES = [
    ((1.0, 1.0, 0.0), (NEG_INF, 18.08, 11.6)),
    ((0.0, 1.0, 0.0), (11.28, NEG_INF, 10.32)),
    ((0.0, 1.0, 1.0), (11.6, NEG_INF, 18.08)),
    ((0.0, 0.0, 1.0), (10.32, 11.28, NEG_INF)),
    ((1.0, 0.0, 1.0), (18.08, 11.6, NEG_INF)),
    ((1.0, 0.0, 0.0), (NEG_INF, 10.32, 11.28)),
]


def _reproduce_seq_cycle_convex() -> ReproductionReport:
    rep = ReproductionReport("seq_cycle_convex")
    game = load_example("seq_cycle_convex")
    trace = dynamics.run_dynamics(game, DynamicsConfig(
        kind=DynamicsKind.SEQUENTIAL_EXACT, start=(1.0, 1.0, 0.0), order=(0, 2, 1)))
    rep.check_flag("sequential run detects a cycle", trace.verdict == Verdict.CYCLE_DETECTED)
    if trace.cycle is not None:
        rep.check("cycle period", trace.cycle.period, 6, 0)
    for state, expected in _CONVEX_CYCLE_STATES:
        util = valuation_batch(game, np.array(state)[None, :]).utility[0]
        for i, target in enumerate(expected):
            rep.check(f"utility of agent {i} at {state}", util[i], target, 0.01)
    top = analysis.maximal_equilibrium(game)
    for i in range(3):
        rep.check(f"maximal equilibrium keep of agent {i}", top.profile[i], 1.0, 1e-9)
    return rep


def _reproduce_cascade() -> ReproductionReport:
    rep = ReproductionReport("cascade")
    game = load_example("cascade")
    lev = valuation_batch(game, np.ones(3)[None, :]).leverage[0]
    rep.check("leverage of agent 0 at all-ones", lev[0], 2.0, 1e-9)
    rep.check("leverage of agent 1 at all-ones", lev[1], 2.0, 1e-9)
    rep.check_flag("agent 2 starts above the cap", lev[2] > game.leverage_cap + 1e-6)
    sync = dynamics.run_dynamics(game, DynamicsConfig(kind=DynamicsKind.SYNCHRONOUS_EXACT))
    rep.check_flag("synchronous run converges", sync.verdict == Verdict.CONVERGED)
    first = sync.profiles[1]
    rep.check_flag("only agent 2 moves first",
                   first[0] >= 1.0 - 1e-9 and first[1] >= 1.0 - 1e-9 and first[2] < 0.999)
    rep.check("first correction of agent 2", first[2], 0.2247448713915890, 1e-9)
    for i in range(3):
        rep.check(f"terminal keep of agent {i}", sync.final[i], 0.0, 1e-9)
    seq = dynamics.run_dynamics(game, DynamicsConfig(kind=DynamicsKind.SEQUENTIAL_EXACT))
    rep.check_flag("sequential run converges", seq.verdict == Verdict.CONVERGED)
    rep.check("sequential terminal max keep", float(seq.final.max()), 0.0, 1e-9)
    top = analysis.maximal_equilibrium(game)
    rep.check_flag("full liquidation is the maximal equilibrium",
                   bool(np.all(top.profile <= 1e-9)) and top.is_exact)
    return rep


def _reproduce_tipping_br() -> ReproductionReport:
    rep = ReproductionReport("tipping_br")
    game = load_example("tipping_br")
    grid = 65536  # tipping points need a fine scan on top of knot candidates
    near = bestresponse.best_response(game, 0, np.array([1.0, 0.8]), grid=grid)
    far = bestresponse.best_response(game, 0, np.array([1.0, 0.6]), grid=grid)
    rep.check("best response when others keep 0.4 in aggregate", near.keep, 0.2, 1e-6)
    rep.check("utility at that response", near.utility, 1.543, 0.002)
    rep.check("best response when others keep 0.3 in aggregate", far.keep, 0.4, 1e-6)
    rep.check("utility at that response", far.utility, 1.539, 0.002)
    rep.check_flag("best response rises as the others sell more", far.keep > near.keep + 0.1)
    cap_near = bestresponse.max_feasible_keep(game, 0, np.array([1.0, 0.8]))
    rep.check("largest feasible keep when others keep 0.4", cap_near, 0.78990, 1e-3)
    return rep


def _reproduce_no_equilibrium(certificate_step: float = 1e-3) -> ReproductionReport:
    rep = ReproductionReport("no_equilibrium")
    game = load_example("no_equilibrium")
    trace = dynamics.run_dynamics(game, DynamicsConfig(
        kind=DynamicsKind.SEQUENTIAL_EXACT, max_steps=200))
    rep.check_flag("sequential run detects a cycle", trace.verdict == Verdict.CYCLE_DETECTED)
    if trace.cycle is not None:
        a0 = sorted({round(float(s[0]), 6) for s in trace.cycle.states})
        a1 = sorted({round(float(s[1]), 6) for s in trace.cycle.states})
        rep.check_flag("agent 0 alternates between 0 and 1",
                       all(min(abs(v - 0.0), abs(v - 1.0)) <= 1e-3 for v in a0)
                       and len(a0) >= 2)
        rep.check_flag("agent 1 alternates between 0 and 0.375",
                       all(min(abs(v - 0.0), abs(v - 0.375)) <= 1e-3 for v in a1)
                       and len(a1) >= 2)
    hold = bestresponse.best_response(game, 1, np.array([1.0, 1.0]))
    dump = bestresponse.best_response(game, 1, np.array([0.0, 0.0]))
    rep.check("agent 1 best response when agent 0 keeps all", hold.keep, 0.0, 1e-6)
    rep.check("utility of that response", hold.utility, 659.99834, 1e-3)
    rep.check("agent 1 best response when agent 0 sells all", dump.keep, 0.375, 1e-4)
    rep.check("utility of that response", dump.utility, 659.99556, 1e-3)
    rep.notes.append("printed value 659,996 uses a decimal comma; it matches 659.996")
    cert = analysis.no_equilibrium_certificate(game, step=certificate_step, tolerance=1e-3)
    rep.check_flag(f"no equilibrium on the {certificate_step:g} grid at tolerance 1e-3",
                   not cert.equilibrium_found)
    return rep


def _reproduce_bank_run_coalition() -> ReproductionReport:
    rep = ReproductionReport("bank_run_coalition")
    game = load_example("bank_run_coalition")
    opt_profile, opt_welfare = analysis.social_optimum_scan(game, resolution=101)
    rep.check("social optimum keep of agent 0", opt_profile[0], 0.25, 0.011)
    rep.check("social optimum keep of agent 1", opt_profile[1], 1.0, 0.011)
    rep.check("social optimum welfare", opt_welfare, 3.554883, 1e-3)
    top = analysis.maximal_equilibrium(game)
    rep.check_flag("maximal equilibrium is exact", top.is_exact)
    rep.check("equilibrium keep of agent 0", top.profile[0], 0.0, 1e-6)
    rep.check("equilibrium keep of agent 1", top.profile[1], 0.937979, 2e-4)
    rep.check("equilibrium utility of agent 0", top.utilities[0], 1.504988, 1e-3)
    rep.check("equilibrium utility of agent 1", top.utilities[1], 1.942021, 1e-3)
    rep.notes.append("printed equilibrium utilities are (1.5, 1.92); the exact "
                     "equilibrium of this game yields (1.505, 1.942), see ledger")
    deviation = analysis.coalition_scan(game, top.profile, grid=51)
    rep.check_flag("an improving coalition exists", deviation is not None)
    if deviation is not None:
        rep.check_flag("the grand coalition improves", deviation.coalition == (0, 1))
    return rep


def _reproduce_bad_equilibrium(n: int = 10) -> ReproductionReport:
    rep = ReproductionReport("bad_equilibrium")
    game = bad_equilibrium_game(n)
    ones = np.ones(n)
    lev = valuation_batch(game, ones[None, :]).leverage[0]
    rep.check("leverage at all-ones", float(lev.max()), game.leverage_cap, 1e-9)
    from .model import social_welfare

    rep.check("welfare of all-ones", social_welfare(game, ones), n / 2.0, 1e-9)
    zeros = analysis.verify_equilibrium(game, np.zeros(n))
    rep.check_flag("all-zeros is an exact equilibrium", zeros.is_exact)
    rep.check("welfare of all-zeros", zeros.welfare, 0.0, 1e-12)
    top = analysis.maximal_equilibrium(game)
    rep.check("maximal equilibrium minimum keep", float(top.profile.min()), 1.0, 1e-8)
    return rep


def _reproduce_bailout() -> ReproductionReport:
    rep = ReproductionReport("bailout")
    game = load_example("bailout")
    report = analysis.bailout_whatif(game, donor=0, recipient=1, asset=0, share=0.1)
    rep.check("donor keep before", report.before.profile[0], 1.0, 1e-9)
    rep.check("recipient keep before", report.before.profile[1], 0.0, 1e-9)
    rep.check("donor equity before", report.before.equities[0], 1000.64, 0.01)
    rep.check("donor keep after", report.after.profile[0], 1.0, 1e-9)
    rep.check("recipient keep after", report.after.profile[1], 1.0, 1e-9)
    rep.check("donor equity after", report.after.equities[0], 1000.7, 0.01)
    rep.check_flag("giving assets away raised the donor's equity",
                   report.after.equities[0] > report.before.equities[0] + 0.01)
    return rep


def _reproduce_noneven_shift() -> ReproductionReport:
    rep = ReproductionReport("noneven_shift")
    game = load_example("noneven_shift")
    others_full = noneven.from_even(np.array([1.0, 1.0]), 2)
    br_full = noneven.best_response_noneven(game, 0, others_full)
    rep.check("keep of asset 0 against full holders", br_full[0], 0.925998, 1e-4)
    rep.check("keep of asset 1 against full holders", br_full[1], 0.925997, 1e-4)
    state = others_full.copy()
    state[0] = br_full
    rep.check("utility at that response", noneven.valuation_noneven(game, state, 0).utility,
              125.818, 0.01)
    others_sell = np.array([[1.0, 1.0], [1.0, 0.8]])  # asset-1 keeps now sum to 0.4
    br_sell = noneven.best_response_noneven(game, 0, others_sell)
    rep.check("keep of asset 0 after the others sell", br_sell[0], 0.829974, 1e-4)
    rep.check("keep of asset 1 after the others sell", br_sell[1], 0.929974, 1e-4)
    state = others_sell.copy()
    state[0] = br_sell
    rep.check("utility at that response", noneven.valuation_noneven(game, state, 0).utility,
              118.541, 0.01)
    rep.check_flag("response is not monotone: asset-0 keep falls, asset-1 keep rises",
                   br_sell[0] < br_full[0] - 1e-3 and br_sell[1] > br_full[1] + 1e-3)
    return rep


_SWOPT_PROFILE = np.array([
    [77.0 / 90.0, 0.9],
    [17.0 / 18.0, 1.0],  # second coordinate unused: the agent holds none of asset 1
])


def _reproduce_noneven_swopt() -> ReproductionReport:
    rep = ReproductionReport("noneven_swopt")
    game = load_example("noneven_swopt")
    u0 = noneven.valuation_noneven(game, _SWOPT_PROFILE, 0)
    u1 = noneven.valuation_noneven(game, _SWOPT_PROFILE, 1)
    rep.check("agent 0 utility at the welfare optimum", u0.utility, 133.5, 0.1)
    rep.check("agent 1 utility at the welfare optimum", u1.utility, 77.5, 0.1)
    rep.check("welfare at the optimum", noneven.social_welfare_noneven(game, _SWOPT_PROFILE),
              211.0, 0.1)
    br = noneven.best_response_noneven(game, 0, _SWOPT_PROFILE)
    rep.check("deviating keep of asset 0", br[0], 0.516717, 1e-3)
    rep.check("deviating keep of asset 1", br[1], 0.988939, 1e-3)
    deviated = _SWOPT_PROFILE.copy()
    deviated[0] = br
    rep.check("utility after the deviation", noneven.valuation_noneven(game, deviated, 0).utility,
              138.0, 0.5)
    rep.check("the deviation ruins agent 1", noneven.valuation_noneven(game, deviated, 1).utility,
              NEG_INF, 0.0)
    rep.check_flag("the welfare optimum is not an equilibrium",
                   float(np.max(np.abs(br - _SWOPT_PROFILE[0]))) > 1e-3)
    answer = noneven.best_response_noneven(game, 1, deviated)
    rep.check("agent 1 answer on asset 0", answer[0], 0.6212, 1e-3)
    return rep


_NONEVEN_CYCLE_START = np.array([[0.73541, 0.749823], [0.579619, 1.0]])
_NONEVEN_CYCLE_SCHEDULE = [
    (1, (0.802502, 1.0)),
    (0, (0.517823, 0.933928)),
    (1, (0.579619, 1.0)),
    (0, (0.73541, 0.749823)),
]
_NONEVEN_CYCLE_UTILITIES = [
    (112.42, 71.4379),
    (115.206, 74.2239),
    (130.897, NEG_INF),
    (NEG_INF, 68.718),
    (112.42, 71.4379),
]


def _reproduce_noneven_cycle() -> ReproductionReport:
    rep = ReproductionReport("noneven_cycle")
    game = load_example("noneven_cycle")
    trace = noneven.improving_response_run(game, _NONEVEN_CYCLE_START, _NONEVEN_CYCLE_SCHEDULE)
    utilities = trace.utilities
    for k, (e0, e1) in enumerate(_NONEVEN_CYCLE_UTILITIES):
        rep.check(f"state {k} utility of agent 0", utilities[k, 0], e0, 0.01)
        rep.check(f"state {k} utility of agent 1", utilities[k, 1], e1, 0.01)
    rep.check_flag("every scheduled move improves the mover",
                   all(s.mover_gain > 0 for s in trace.steps))
    rep.check_flag("the last state matches the first",
                   bool(np.allclose(trace.profiles[-1], trace.profiles[0], atol=1e-12)))
    return rep


_SCENARIOS: dict[str, Callable[..., ReproductionReport]] = {
    "sync_oscillation": _reproduce_sync_oscillation,
    "seq_cycle_convex": _reproduce_seq_cycle_convex,
    "cascade": _reproduce_cascade,
    "tipping_br": _reproduce_tipping_br,
    "no_equilibrium": _reproduce_no_equilibrium,
    "bank_run_coalition": _reproduce_bank_run_coalition,
    "bad_equilibrium": _reproduce_bad_equilibrium,
    "bailout": _reproduce_bailout,
    "noneven_shift": _reproduce_noneven_shift,
    "noneven_swopt": _reproduce_noneven_swopt,
    "noneven_cycle": _reproduce_noneven_cycle,
}


def reproduce(example_id: str, **kwargs) -> ReproductionReport:
    """Run the scripted scenario for one example id and compare to its fixture."""
    try:
        scenario = _SCENARIOS[example_id]
    except KeyError:
        raise KeyError(f"unknown example id {example_id!r}; "
                       f"known: {', '.join(EXAMPLE_IDS)}") from None
    return scenario(**kwargs)
