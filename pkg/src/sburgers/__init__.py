"""Spectral Galerkin simulation and convergence analysis for the 1D
stochastic viscous Burgers equation with additive trace-class noise."""

from .fields import (SpectralField, eval_on_grid, fractional_norm,
                     fractional_power, project, semigroup)
from .integrator import (BlowUpError, SchemeConfig, SolverState, evolve,
                         evolve_batch, step, step_second_variation, step_tangent)
from .noise import CovarianceModel, projected_trace, sample_increment, trace
from .nonlinearity import (bilinear_conv, bilinear_fast, nonlinearity_conv,
                           nonlinearity_fast)
from .observables import (BoundParameters, MCSettings, MomentReport,
                          TestFunctional, d2u_estimate, derivative_bound_scan,
                          du_estimate, moment_statistics, phi_eval, phi_grad,
                          phi_hess_vec, weak_value)
from .experiments import (RateEstimate, StudyConfig, fit_rate,
                          linear_case_study, ou_mode_variance, ou_tail_error,
                          strong_error_study, weak_error_study)
from .rng import NoiseStream
from .runner import run_study

__version__ = "0.1.0"
