"""Game-option (Israeli option) pricing and explicit hedging on CRR
binomial lattices, with a Brownian-embedding shortfall study."""

from .model import (
    MarketParams,
    StepModel,
    StockLattice,
    GamePayoffSpec,
    make_step_model,
    build_stock_lattice,
    payoff_lattices,
    game_put,
    game_call,
)
from .dynkin import (
    ValueLattice,
    StoppingRule,
    game_value,
    american_value,
    rational_stopping,
    one_sided_envelope,
    brute_force_value,
    path_tree_game_value,
)
from .hedging import (
    DoobDecomposition,
    HedgePlan,
    doob_decompose,
    representation_alpha,
    hedge_ratios,
    build_hedge_plan,
    portfolio_trajectory,
    positions_along,
    verify_superhedge,
    exhaustive_superhedge_margin,
)
from .embedding import (
    BrownianPath,
    EmbeddingTimes,
    TruncationError,
    sample_path,
    embed_times,
    continuous_game_payoff,
    shortfall_psi,
    estimate_mean_shortfall,
    run_shortfall_experiment,
    hedging_gap,
    embedded_sign_frequency,
    default_tau_family,
    write_shortfall_csv,
    write_path_fixture,
    read_path_fixture,
)

__version__ = "0.1.0"
