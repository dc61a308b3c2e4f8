"""Causal mediation estimators with control-function selection corrections.

Three estimators of the average direct and indirect effects of a binary
treatment through a binary mediator: conventional two-stage OLS, a parametric
(inverse-Mills) control function and a semi-parametric spline control
function. A Roy-model simulator with a potential-outcome oracle and a pairs
bootstrap support simulation studies.
"""

__version__ = "0.1.0"

from .cf import CfConvention, gamma_bar, lambda0, lambda1
from .dgp import DGPConfig, bias_decomposition, ignorability_diagnostic, oracle_truths, simulate
from .errors import MediationError
from .estimators import (
    ESTIMATORS,
    SplineConfig,
    estimate,
    estimate_ate,
    estimate_conventional,
    estimate_parametric_cf,
    estimate_semiparametric_cf,
    fit_propensity,
)
from .inference import bootstrap
from .model import BootstrapResult, CMEstimates, MediationDataset, read_dataset, validate_dataset, write_dataset

__all__ = [
    "BootstrapResult",
    "CMEstimates",
    "CfConvention",
    "DGPConfig",
    "ESTIMATORS",
    "MediationDataset",
    "MediationError",
    "SplineConfig",
    "bias_decomposition",
    "bootstrap",
    "estimate",
    "estimate_ate",
    "estimate_conventional",
    "estimate_parametric_cf",
    "estimate_semiparametric_cf",
    "fit_propensity",
    "gamma_bar",
    "ignorability_diagnostic",
    "lambda0",
    "lambda1",
    "oracle_truths",
    "read_dataset",
    "simulate",
    "validate_dataset",
    "write_dataset",
]
