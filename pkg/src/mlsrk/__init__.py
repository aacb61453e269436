"""Multilevel particle MCMC for partially observed diffusions.

The package combines stochastic Runge-Kutta time stepping, coupled
particle filters, and particle marginal Metropolis-Hastings chains into
multilevel estimators of posterior expectations, plus benchmark drivers
that measure discretization error rates and cost against achieved MSE.
"""

from .discretize import (
    DEFAULT_BETA,
    Scheme,
    SrkTableau,
    batch_interval,
    coupled_simulate_interval,
    make_scheme,
    make_tableau,
    scheme_step,
    simulate_interval,
)
from .errors import (
    CannotCoarsenError,
    ConfigError,
    DegenerateWeightsError,
    EpsilonTooLargeError,
    FilterCollapseError,
    MlsrkError,
    NumericalDomainError,
    UnsupportedDimensionError,
)
from .experiments import (
    CostMseConfig,
    RateConfig,
    ensure_dataset,
    measure_rates,
    run_cost_mse_experiment,
    run_ml_once,
    run_rate_experiment,
)
from .filters import (
    delta_particle_filter,
    log_g_trajectory,
    particle_filter,
    resample_multinomial,
)
from .mcmc import ChainOutput, ProposalKernel, pmmh_coupled, pmmh_single
from .models import (
    Dataset,
    ModelPreset,
    ObservationModel,
    Prior,
    SdeModel,
    check_commutativity,
    check_rk4_condition,
    corrected_drift,
    generate_data,
    load_dataset,
    make_preset,
    save_dataset,
    sigma_bar,
)
from .multilevel import (
    MlConfig,
    MlResult,
    allocate,
    cost,
    h_weights,
    increment_estimate,
    ml_estimate,
    phi_theta,
)
from .paths import BrownianIncrements, RngStream, derive_seed, sample_increments

__version__ = "0.1.0"

__all__ = [
    "BrownianIncrements",
    "CannotCoarsenError",
    "ChainOutput",
    "ConfigError",
    "CostMseConfig",
    "Dataset",
    "DEFAULT_BETA",
    "DegenerateWeightsError",
    "EpsilonTooLargeError",
    "FilterCollapseError",
    "MlConfig",
    "MlResult",
    "MlsrkError",
    "ModelPreset",
    "NumericalDomainError",
    "ObservationModel",
    "Prior",
    "ProposalKernel",
    "RateConfig",
    "RngStream",
    "Scheme",
    "SdeModel",
    "SrkTableau",
    "UnsupportedDimensionError",
    "allocate",
    "batch_interval",
    "check_commutativity",
    "check_rk4_condition",
    "corrected_drift",
    "cost",
    "coupled_simulate_interval",
    "delta_particle_filter",
    "ensure_dataset",
    "generate_data",
    "h_weights",
    "increment_estimate",
    "load_dataset",
    "log_g_trajectory",
    "make_preset",
    "make_scheme",
    "make_tableau",
    "measure_rates",
    "ml_estimate",
    "particle_filter",
    "phi_theta",
    "pmmh_coupled",
    "pmmh_single",
    "resample_multinomial",
    "run_cost_mse_experiment",
    "run_ml_once",
    "run_rate_experiment",
    "sample_increments",
    "save_dataset",
    "scheme_step",
    "sigma_bar",
    "simulate_interval",
]
