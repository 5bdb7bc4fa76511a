"""Integrated principal components analysis (iPCA).

Penalized maximum-likelihood estimation of a shared row covariance and
per-view column covariances for coupled data matrices, with score
extraction, variance explained, penalty tuning and simulation tools.
"""
from .dataset import MultiViewDataset, center_columns, concatenate, load_csv, split_columns, write_csv
from .errors import *  # noqa: F401,F403
from .estimators import (
    CovarianceFit,
    Family,
    FitOptions,
    PenaltySpec,
    concatenated_pca_sigma,
    delta_given_identity_sigma,
    fit,
    fit_additive_frobenius,
    fit_additive_l1_corr,
    fit_additive_l1_cov,
    fit_multiplicative_frobenius,
    fit_unpenalized,
    penalized_loglik,
    theory_lambdas,
)
from .glasso import GlassoProblem, glasso, graphical_lasso
from .model import IpcaModel, extract, mpve, pve, top_scores
from .tuning import conditional_expectation, impute_onestep, imputation_error, mask_random, select_penalties

__version__ = "0.1.0"
