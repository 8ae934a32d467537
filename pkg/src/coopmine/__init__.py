"""Cooperative optimal mining: equilibrium power investment, pool
protocols with attendance dynamics, and repeated-dilemma simulation."""

from .dilemma import (
    DilemmaPayoffs,
    ZDStrategy,
    build_payoffs,
    coplayer_payoffs,
    fair_strategy,
    max_phi,
)
from .equilibrium import (
    EquilibriumSolution,
    GridSearch,
    active_set,
    best_response_dynamics,
    best_response_oracle,
    equilibrium_strategy,
    participation_condition,
    psi,
)
from .model import (
    GameEnv,
    GameState,
    PlayerSpec,
    SolveError,
    ValidationError,
    effective_reward,
    effective_reward_btc,
    optimal_block_size,
)
from .pool import (
    CooperativeSolution,
    Network,
    PoolSpec,
    ProfileRow,
    ProtocolResult,
    RewardShares,
    WorkAssignment,
    annual_energy_twh,
    cooperative_solution,
    distribute_work,
    miner_total_utility,
    network_equilibrium,
    pool_fixed_point,
    protocol_game,
    reward_shares,
    scenario_utilities,
    sdp_table,
)
from .simulate import (
    BatchResult,
    SimConfig,
    SimTrajectory,
    batch,
    fairness_check,
    run,
    step,
)
from .stochastic import (
    ClassChain,
    MinerClass,
    ReducibleChainError,
    UtilityTable,
    build_chain,
    expected_utilities,
    fixed_investment_utilities,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "ClassChain",
    "CooperativeSolution",
    "DilemmaPayoffs",
    "EquilibriumSolution",
    "GameEnv",
    "GameState",
    "GridSearch",
    "MinerClass",
    "Network",
    "PlayerSpec",
    "PoolSpec",
    "ProfileRow",
    "ProtocolResult",
    "ReducibleChainError",
    "RewardShares",
    "SimConfig",
    "SimTrajectory",
    "SolveError",
    "UtilityTable",
    "ValidationError",
    "WorkAssignment",
    "ZDStrategy",
    "active_set",
    "annual_energy_twh",
    "batch",
    "best_response_dynamics",
    "best_response_oracle",
    "build_chain",
    "build_payoffs",
    "cooperative_solution",
    "coplayer_payoffs",
    "distribute_work",
    "effective_reward",
    "effective_reward_btc",
    "equilibrium_strategy",
    "expected_utilities",
    "fair_strategy",
    "fairness_check",
    "fixed_investment_utilities",
    "max_phi",
    "miner_total_utility",
    "network_equilibrium",
    "optimal_block_size",
    "participation_condition",
    "pool_fixed_point",
    "protocol_game",
    "psi",
    "reward_shares",
    "run",
    "scenario_utilities",
    "sdp_table",
    "stationary_distribution",
    "step",
]
