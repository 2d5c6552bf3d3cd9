"""Fire-sale games: model, best responses, dynamics, equilibria, experiments."""

from .model import (
    AgentStatus,
    AgentValuation,
    Game,
    GameError,
    GameSchemaError,
    LinearImpact,
    PiecewiseLinearImpact,
    PowerImpact,
    game_from_json,
    kept_amount,
    load_game,
    price,
    social_welfare,
    valuation,
)
from .bestresponse import (
    BestResponseResult,
    BRMethod,
    best_response,
    best_response_profile,
    max_feasible_keep,
    simplified_best_response,
)
from .dynamics import (
    ApproxEquilibriumReport,
    DynamicsConfig,
    DynamicsKind,
    DynamicsTrace,
    Verdict,
    check_approx_equilibrium,
    run_dynamics,
    step_size_series,
)
from .analysis import (
    CoalitionDeviation,
    EquilibriumReport,
    UnsupportedRegimeError,
    bailout_whatif,
    coalition_scan,
    lattice_check,
    maximal_equilibrium,
    verify_equilibrium,
)
from .noneven import (
    VectorValuation,
    best_response_noneven,
    improving_response_run,
    valuation_noneven,
)
from .experiments import ExperimentConfig, run_experiment, sample_game

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
