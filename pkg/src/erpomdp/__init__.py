"""Entropy-regularized POMDP toolkit.

Builds belief-MDP reformulations of POMDPs whose costs penalize state
uncertainty and observation/control incompressibility, solves them with
point-based alpha-vector value iteration (exactly when the two entropy
weights match, via tangent-plane approximation otherwise), and evaluates
policies with a reproducible Monte Carlo harness.  All entropies are in
bits.
"""

__version__ = "0.1.0"

from .entropy import (
    AlphaVector,
    PwlcApproximation,
    belief_entropy,
    build_pwlc,
    default_base_points,
    entropy_bits,
    grad_G,
    joint_stage_cost,
    linear_cost_vectors,
    obs_entropy_term,
    smoother_increment,
    sparsity,
    stage_cost_G,
)
from .errors import (
    BoundaryBelief,
    ErpomdpError,
    ImpossibleObservation,
    ModelValidationError,
    TooLarge,
    WeightMismatch,
    ZeroLikelihood,
)
from .estimation import (
    EntropyLedger,
    ExactEntropies,
    PolicyTable,
    accumulate_ledger,
    brute_force_entropies,
    expected_belief_sums,
    initial_obs_entropy,
    viterbi_map,
)
from .harness import (
    CriteriaReport,
    GridSpec,
    build_gridworld,
    default_grid_spec,
    geometric_discount_check,
    monte_carlo,
    run_episode,
    sample_horizon,
)
from .model import (
    PomdpModel,
    TrajectoryRecord,
    filter_update,
    initial_belief,
    load_model,
    obs_predictive,
    predict_joint,
    sample_step,
    save_model,
    validate_model,
)
from .solver import (
    AlphaPolicy,
    SolverConfig,
    bellman_backup,
    expand_beliefs,
    load_policy,
    policy_action,
    save_policy,
    solve,
)
