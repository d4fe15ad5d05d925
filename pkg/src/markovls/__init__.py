"""Identification of LTI Markov parameters from multiple rollouts.

The package simulates multi-rollout datasets of linear systems in
innovations form, estimates the input-side Markov parameters by ordinary
and weighted least-squares (with exact or data-driven weighting blocks),
evaluates closed-form finite-sample error bounds, and benchmarks all of it
with a seeded Monte Carlo harness and a CLI.
"""

__version__ = "0.1.0"

from .bounds import (BoundInputs, BoundReport, error_bound, evaluate_bounds,
                     ols_bound_constants, wls_bound_constants, variance_gap)
from .errors import (ConfigError, IllConditionedError, MarkovLSError,
                     RankDeficiencyError, SimulationOverflowError)
from .estimators import (EstimateReport, MarkovOLS, MarkovWLS, PredictorLS,
                         WeightingOperator, check_rollout_arrays,
                         estimated_weighting, ols, optimal_weighting,
                         predictor_ls, projection_hk, siso_wls_error_paths,
                         wls, wls_estimated)
from .extraction import (HankelBlock, IllSeparatedRankWarning, Realization,
                         ho_kalman_extract, recursive_extract)
from .harness import (ESTIMATOR_TAGS, ExperimentConfig, ExperimentReport,
                      RateFit, TrialResult, fit_rate, gap_decay,
                      run_experiment, run_trial)
from .model import (MarkovSequence, PredictorModel, StateSpaceModel,
                    ToeplitzStack, markov_input, markov_noise, noise_toeplitz,
                    predictor_markov, recompose, system_from_json,
                    system_to_json, to_predictor, toeplitz_stack)
from .presets import mimo_paper, resolve_system, siso_paper
from .rollout import (PredictorRegression, RolloutDataset, SimConfig,
                      assemble_predictor, simulate)

__all__ = [
    "__version__",
    # model
    "StateSpaceModel", "PredictorModel", "MarkovSequence", "ToeplitzStack",
    "markov_input", "markov_noise", "to_predictor", "recompose",
    "predictor_markov", "toeplitz_stack", "noise_toeplitz",
    "system_to_json", "system_from_json",
    # presets
    "siso_paper", "mimo_paper", "resolve_system",
    # rollout
    "SimConfig", "RolloutDataset", "PredictorRegression", "simulate",
    "assemble_predictor",
    # estimators
    "EstimateReport", "WeightingOperator", "ols", "wls", "wls_estimated",
    "optimal_weighting", "estimated_weighting", "predictor_ls",
    "projection_hk", "siso_wls_error_paths", "check_rollout_arrays",
    "MarkovOLS", "MarkovWLS", "PredictorLS",
    # extraction
    "HankelBlock", "Realization", "IllSeparatedRankWarning",
    "recursive_extract", "ho_kalman_extract",
    # bounds
    "BoundInputs", "BoundReport", "ols_bound_constants", "wls_bound_constants",
    "error_bound", "evaluate_bounds", "variance_gap",
    # harness
    "ESTIMATOR_TAGS", "ExperimentConfig", "ExperimentReport", "TrialResult",
    "RateFit", "run_trial", "run_experiment", "fit_rate", "gap_decay",
    # errors
    "MarkovLSError", "ConfigError", "SimulationOverflowError",
    "IllConditionedError", "RankDeficiencyError",
]
