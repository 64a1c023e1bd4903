"""Mixing-strategy optimization for depth-resolved microalgae raceway ponds.

Growth under photoinhibition depends on the light history each parcel of
culture sees. With the pond cut into N layers and a mixing device that
permutes layer contents once per lap, the periodic regime and the
lap-averaged growth rate have closed forms, and the best device can be
found exactly by exhaustive search over the permutation group, or
approximately by a sorting rule. See the module docstrings for the model
and the README for CLI recipes.
"""

from .kinetics import (DEFAULT_PARAMS, HanParams, InvariantViolation,
                       LapCoefficients, LightField, build_light_field,
                       integrate_full_han, lap_coefficients, quasi_steady_split,
                       rate_alpha, rate_beta, rate_gamma, rate_zeta)
from .lap_dynamics import (LapState, PeriodicityReport, Permutation, apply_lap,
                           check_periodicity, fixed_point, simulate_laps)
from .objective import (J, J_approx, ObjectiveValue, evaluate_strategy, is_tie,
                        mu_bar_from_state, ratios, tie_tolerance)
from .solvers import (SEARCH_N_CAP, SearchCapError, SearchReport,
                      exhaustive_search, partitioned_search, sorting_solver,
                      spot_check)
from .experiments_cli import (BudgetError, ExperimentConfig, cmd_optimize,
                              cmd_ratios, cmd_simulate, cmd_sweep,
                              default_config, main, parse_config,
                              serialize_config)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PARAMS", "HanParams", "InvariantViolation", "LapCoefficients",
    "LightField", "build_light_field", "integrate_full_han",
    "lap_coefficients", "quasi_steady_split", "rate_alpha", "rate_beta",
    "rate_gamma", "rate_zeta",
    "LapState", "PeriodicityReport", "Permutation", "apply_lap",
    "check_periodicity", "fixed_point", "simulate_laps",
    "J", "J_approx", "ObjectiveValue", "evaluate_strategy", "is_tie",
    "mu_bar_from_state", "ratios", "tie_tolerance",
    "SEARCH_N_CAP", "SearchCapError", "SearchReport", "exhaustive_search",
    "partitioned_search", "sorting_solver", "spot_check",
    "BudgetError", "ExperimentConfig", "cmd_optimize", "cmd_ratios",
    "cmd_simulate", "cmd_sweep", "default_config", "main", "parse_config",
    "serialize_config",
    "__version__",
]
