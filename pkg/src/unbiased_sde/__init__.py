"""Unbiased randomized-truncation estimators for SDE expectations, with an MLMC baseline."""

from .brownian import BrownianGrid, init_brownian_grid, refine_grid
from .harness import (
    RunningStats,
    StoppingRule,
    TableRow,
    meta_experiment,
    run_until_tolerance,
    sample_rmse_of_mean,
    true_value,
    update_stats,
)
from .mlmc import MlmcConfig, MlmcResult, coupled_level_sample, mlmc_estimate, optimal_level_sizes
from .models import (
    DiscountedCall,
    Problem,
    Scheme,
    SdeModel,
    TerminalValue,
    cir,
    euler_step,
    frozen,
    gbm,
    milstein_step,
    simulate_level_terminals,
    simulate_terminal,
)
from .streams import RandomStream, derive_substream, next_gaussian
from .unbiased import (
    LevelDistribution,
    UnbiasedSampler,
    ZSample,
    estimate_strong_order,
    sample_level_count,
    sample_Z,
    validate_gamma,
)

__version__ = "0.1.0"
