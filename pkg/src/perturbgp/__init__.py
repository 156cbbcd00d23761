"""Gaussian-process parameter estimation on randomly perturbed regular grids.

Maximum likelihood and leave-one-out cross validation for Matérn models,
their asymptotic covariance matrices, Toeplitz closed forms at the regular
grid, and the effect of estimation on prediction.
"""

from .bessel import bessel_k
from .covariance import (CovarianceModel, MaternModel, MaternParams, ParamBox,
                         VarianceModel, matern, matern_dell, matern_dnu,
                         matern_lag_derivs)
from .gp_core import (CholeskyError, CovMatrix, GpDataset, build_cov_and_grad,
                      build_cov_matrix, krig_predict, make_dataset, simulate_gp,
                      virtual_loo)
from .sampling import PerturbedDesign, grid_enumeration, min_spacing, sample_design

__version__ = "0.1.0"
