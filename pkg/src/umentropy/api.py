"""One entry point for every estimator family."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .estimators import EstimatorConfig, EstimateReport, KINDS, estimate
from .flow import TrainConfig
from .uniformize import NfConfig, UmConfig, nf_only_estimate, um_estimate

ESTIMATOR_NAMES = KINDS + ("UM-tKL", "UM-tKSG", "NF")


def parse_estimator(name: str, k: int = 1, flow: TrainConfig | None = None, seed: int = 0,
                    split_fraction: float = 0.5, p=np.inf):
    """Build a config from a name such as ``"tKL"`` or ``"UM-tKSG"``."""
    flow = flow or TrainConfig()
    if name in KINDS:
        return EstimatorConfig(name, k, p if name == "KL" else np.inf)
    if name in ("UM-tKL", "UM-tKSG"):
        return UmConfig(name[3:], k, split_fraction, flow, seed)
    if name == "NF":
        return NfConfig(UmConfig("tKSG", k, split_fraction, flow, seed))
    raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}")


def run_estimator(samples, config, seed=None, model=None) -> EstimateReport:
    """Estimate entropy with any config; ``seed`` overrides a flow config's seed."""
    if isinstance(config, EstimatorConfig):
        report = estimate(samples, config)
        report.seed = None if seed is None else int(seed)
        return report
    if isinstance(config, UmConfig):
        cfg = config if seed is None else replace(config, seed=int(seed))
        return um_estimate(samples, cfg, model)
    if isinstance(config, NfConfig):
        cfg = config.um if seed is None else replace(config.um, seed=int(seed))
        return nf_only_estimate(samples, cfg, model)
    raise TypeError(f"unsupported estimator config {type(config).__name__}")
