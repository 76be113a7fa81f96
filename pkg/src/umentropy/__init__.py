"""Differential entropy estimation with k-NN estimators and uniformizing flows.

The truncated estimators (tKL, tKSG) work on data in the unit cube. For
general data a masked autoregressive flow followed by the normal CDF maps
the sample toward the uniform distribution on the cube; the entropy is
the truncated estimate there plus a change-of-variables correction.
"""

from .api import ESTIMATOR_NAMES, parse_estimator, run_estimator
from .distributions import analytic_entropy, make, sample
from .errors import (Diverged, DomainError, DuplicatePoints, EntropyError, InvalidK,
                     NonFinite, OutOfDomain, TooFewSamples)
from .estimators import (EstimateReport, EstimatorConfig, estimate, kl_estimate, ksg_estimate,
                         rescale_to_unit_cube, tkl_estimate, tksg_estimate)
from .flow import FlowModel, TrainConfig, gaussian_cdf, train
from .samples import SampleSet
from .uniformize import NfConfig, UmConfig, nf_only_estimate, uniformize, um_estimate

__version__ = "0.1.0"

__all__ = [
    "ESTIMATOR_NAMES", "parse_estimator", "run_estimator",
    "analytic_entropy", "make", "sample",
    "Diverged", "DomainError", "DuplicatePoints", "EntropyError", "InvalidK", "NonFinite",
    "OutOfDomain", "TooFewSamples",
    "EstimateReport", "EstimatorConfig", "estimate", "kl_estimate", "ksg_estimate",
    "rescale_to_unit_cube", "tkl_estimate", "tksg_estimate",
    "FlowModel", "TrainConfig", "gaussian_cdf", "train",
    "SampleSet",
    "NfConfig", "UmConfig", "nf_only_estimate", "uniformize", "um_estimate",
]
