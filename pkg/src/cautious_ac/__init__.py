"""Exact tabular cautious actor-critic and regularized policy iteration.

The functional core lives in :mod:`.mdp`, :mod:`.regularizers`,
:mod:`.cautious` and :mod:`.algorithms`; :mod:`.estimators` wraps the loops
in scikit-learn style classes and :mod:`.harness` provides the CLI.
"""

from .algorithms import (
    Adaptive,
    AlgoConfig,
    ExactLowerBound,
    Fixed,
    IterationRecord,
    RunResult,
    run_cac,
    run_cpi_classic,
    run_cvi,
    run_spi_shannon,
    with_noisy_critic,
)
from .cautious import ZetaMovingState, interpolate, tv_bound, zeta_cac_update, zeta_exact
from .envs import EnvSpec, make_chain, make_discretized_pendulum, make_env, make_gridworld, make_random_mdp
from .estimators import (
    CautiousActorCritic,
    ConservativePolicyIteration,
    ConservativeValueIteration,
    SoftPolicyIteration,
)
from .mdp import ConvergenceError, TabularMdp, occupancy_measure, policy_evaluation_exact
from .regularizers import RegParams, boltzmann_greedy, soft_policy_evaluation, soft_value_iteration_oracle

__version__ = "0.1.0"

__all__ = [
    "Adaptive",
    "AlgoConfig",
    "ExactLowerBound",
    "Fixed",
    "IterationRecord",
    "RunResult",
    "run_cac",
    "run_cpi_classic",
    "run_cvi",
    "run_spi_shannon",
    "with_noisy_critic",
    "ZetaMovingState",
    "interpolate",
    "tv_bound",
    "zeta_cac_update",
    "zeta_exact",
    "EnvSpec",
    "make_chain",
    "make_discretized_pendulum",
    "make_env",
    "make_gridworld",
    "make_random_mdp",
    "CautiousActorCritic",
    "ConservativePolicyIteration",
    "ConservativeValueIteration",
    "SoftPolicyIteration",
    "ConvergenceError",
    "TabularMdp",
    "occupancy_measure",
    "policy_evaluation_exact",
    "RegParams",
    "boltzmann_greedy",
    "soft_policy_evaluation",
    "soft_value_iteration_oracle",
]
