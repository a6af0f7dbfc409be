"""Jump-driven flows on foliated manifolds: canonical integration of
pure-jump driving noise along compact leaves, slow transversal
perturbations, the averaged transversal flow, and the rate and exit
experiments connecting the two.

The bundled cylinder preset (circle leaves, radius/height transversal
coordinates, Gamma subordinator driver) exercises every piece with known
closed forms.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .averaging import (AveragedField, AveragedSolution, RateEstimate,
                        averaged_component, averaged_field, delta_defect,
                        delta_defect_lp, ergodic_average, estimate_eta,
                        fit_loglog, leaf_average_quadrature, lp_moment,
                        rate_to_csv, solve_averaged_ode)
from .config import (ExperimentConfig, apply_overrides, config_from_dict,
                     config_to_dict, dump_config, integrator_from_config,
                     load_config, loads_config, preset_from_config)
from .drivers import (CompoundPoisson, GammaSubordinator, IncrementSeries,
                      JumpEvents, TruncatedMeasure, characteristic_function,
                      circle_law_distance, marginal_samples,
                      sample_increments, sample_jump_events, truncate_gamma)
from .errors import (BlowupError, ConfigError, DomainError, FolevyError,
                     QuadratureError)
from .experiments import (OBSERVABLES, ComparisonResult, DeviationResult,
                          ExitProbabilityResult, SchemeAgreementResult,
                          comparison_to_csv, deviation_scaling,
                          deviation_to_csv, exit_probability, exit_to_csv,
                          projected_perturbation, scheme_agreement,
                          transversal_comparison)
from .geometry import (ConstantK, CylinderPreset, FoliatedChart, LinearK,
                       TangencyReport, VectorFieldSet, dpi_k,
                       make_cylinder_preset, tangency_check)
from .marcus import (EnsembleResult, IntegratorConfig, Trajectory,
                     integrate_grid_ensemble, integrate_perturbed,
                     integrate_unperturbed, jump_flow, trajectory_to_csv)
from .rng import RngStream, path_streams

__all__ = [
    "AveragedField", "AveragedSolution", "BlowupError", "CompoundPoisson",
    "ComparisonResult", "ConfigError", "ConstantK", "CylinderPreset",
    "DeviationResult", "DomainError", "EnsembleResult", "ExitProbabilityResult",
    "ExperimentConfig", "FoliatedChart", "FolevyError", "GammaSubordinator",
    "IncrementSeries", "IntegratorConfig", "JumpEvents", "LinearK",
    "OBSERVABLES", "QuadratureError", "RateEstimate", "RngStream",
    "SchemeAgreementResult", "TangencyReport", "Trajectory",
    "TruncatedMeasure", "VectorFieldSet", "apply_overrides",
    "averaged_component", "averaged_field", "characteristic_function",
    "circle_law_distance", "comparison_to_csv", "config_from_dict",
    "config_to_dict", "delta_defect", "delta_defect_lp", "deviation_scaling",
    "deviation_to_csv", "dpi_k", "dump_config", "ergodic_average",
    "estimate_eta", "exit_probability", "exit_to_csv", "fit_loglog",
    "integrate_grid_ensemble", "integrate_perturbed", "integrate_unperturbed",
    "integrator_from_config", "jump_flow", "leaf_average_quadrature",
    "load_config", "loads_config", "lp_moment", "make_cylinder_preset",
    "marginal_samples", "path_streams", "preset_from_config",
    "projected_perturbation", "rate_to_csv", "sample_increments",
    "sample_jump_events", "scheme_agreement", "solve_averaged_ode",
    "tangency_check", "trajectory_to_csv", "transversal_comparison",
    "truncate_gamma",
]
