"""Tabular offline RL lab: pessimistic value iteration, gap-dependent diagnostics and experiments."""
from .mdp import (
    CoverageReport,
    NoPositiveGap,
    OccupancyTable,
    Policy,
    RewardNoise,
    TabularMdp,
    ValidationError,
    ValidationReport,
    ValueTables,
    coverage_coefficients,
    gap_min,
    occupancy,
    optimal_values,
    policy_suboptimality,
    policy_values,
    validate_mdp,
)
from .dataset import (
    TransitionCounts,
    TransitionDataset,
    count_transitions,
    sample_trajectories,
    split_and_subsample,
)
from .vi_lcb import (
    PessimisticSolution,
    SolverConfig,
    bernstein_bonus,
    empirical_kernel,
    run_subsampled_vi_lcb,
    run_vi_lcb,
)
from .diagnostics import (
    ThresholdSpec,
    check_pessimism,
    deficit_report,
    imaginary_mdp,
    threshold_certificate,
)
from .instances import (
    LowerBoundParams,
    NecessityParams,
    make_chain_instance,
    make_lower_bound_instance,
    make_necessity_instance,
    make_random_gap_mdp,
    make_shifted_chain_instance,
    parse_instance,
    uniform_behavior,
)
from .experiments import BudgetExhausted, find_min_n, run_trial, sweep

__version__ = "0.1.0"
