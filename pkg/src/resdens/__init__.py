"""Kernel estimation of the regression error density."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .bandwidth import (GridSearchResult, RateInputs, argmin_surface, grid_search, plugin_b1,
                        rate_b0_star, rate_b1_star, rate_h_star, risk_Rn, risk_RTn)
from .density import (Bandwidths, CurveEstimate, TrimSet, conditional_density, f1_hat,
                      f1_hat_curve, f1_tilde, f1_tilde_curve, f2_hat, f2_hat_curve, f2_tilde,
                      f2_tilde_curve, joint_density, marginal_density)
from .diagnostics import (TestResult, ks_decision, ks_test_standard, lilliefors, qq_points,
                          quantile_ci, standardize_z)
from .errors import ConfigError, ResdensError
from .grids import GridSpec, IntegrationGrid
from .kernels import BIWEIGHT, EPANECHNIKOV, Kernel, ProductKernel, get_kernel, kernel_functional
from .montecarlo import ModelSpec, ReplicationMatrix, SimConfig, replicate
from .regression import ResidualSet, Sample, nw_estimate, nw_leave_one_out, residuals
from .study import McReport, run_simulation
