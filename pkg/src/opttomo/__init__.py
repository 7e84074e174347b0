"""Transport vs diffusion forward models and Bayesian posterior comparison."""

from .asymptotics import (RateStudy, expansion_terms, fit_rate, forward_gap,
                          residual_norms)
from .bayes import (DataVector, DivergenceEstimate, EvidenceEstimate,
                    PosteriorEnsemble, estimate_evidences, estimate_hellinger,
                    estimate_kl, generate_data, log_likelihood, pcn_sampler,
                    prior_ensemble)
from .config import (ConfigError, ExperimentConfig, canonical_json,
                     config_from_payload, fingerprint, load_config,
                     with_overrides)
from .diffusion import (dtn_measurement, forward_map_de, solve_de,
                        solve_de_adjoint)
from .grids import build_grid, build_quadrature
from .harness import (RunReport, run_forward, run_linearized_compare,
                      run_make_data, run_posterior_compare, run_rates)
from .linearized import (GaussianPosterior, KernelBank, LinearForwardMap,
                         gaussian_hellinger, gaussian_update, kernel_bank_de,
                         kernel_bank_rte, linear_map, linearized_data,
                         moment_distance)
from .measurement import MeasurementSetup, make_trace, setup_from_positions
from .medium import (Medium, PriorSpec, linearized_prior_covariance,
                     medium_from_coefficients, medium_from_log_field,
                     sample_prior)
from .transport import (albedo_measurement, collision, forward_map_rte,
                        lift_boundary, solve_rte, solve_rte_adjoint)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataVector", "DivergenceEstimate", "EvidenceEstimate",
    "ExperimentConfig", "GaussianPosterior", "KernelBank",
    "LinearForwardMap", "MeasurementSetup", "Medium", "PosteriorEnsemble",
    "PriorSpec", "RateStudy", "RunReport", "albedo_measurement",
    "build_grid", "build_quadrature", "canonical_json", "collision",
    "config_from_payload", "dtn_measurement", "estimate_evidences",
    "estimate_hellinger", "estimate_kl", "expansion_terms", "fingerprint",
    "fit_rate", "forward_gap", "forward_map_de", "forward_map_rte",
    "gaussian_hellinger", "gaussian_update", "generate_data",
    "kernel_bank_de", "kernel_bank_rte", "lift_boundary", "linear_map",
    "linearized_data", "linearized_prior_covariance", "load_config",
    "log_likelihood", "make_trace", "medium_from_coefficients",
    "medium_from_log_field", "moment_distance", "pcn_sampler",
    "prior_ensemble", "residual_norms", "run_forward",
    "run_linearized_compare", "run_make_data", "run_posterior_compare",
    "run_rates", "sample_prior", "setup_from_positions", "solve_de",
    "solve_de_adjoint", "solve_rte", "solve_rte_adjoint", "with_overrides",
]
