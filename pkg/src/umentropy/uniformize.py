"""Entropy estimation by pushing samples toward the uniform cube.

The map is ``f = Phi o g`` with ``g`` a trained flow (data -> standard
normal) and ``Phi`` the coordinatewise normal CDF. For ``z = f(x)``,

    log|det d f^{-1}(z) / dz| = -(sum_j log phi(y_j) + log|det dg(x)/dx|),

with ``y = g(x)``, and the entropy of ``x`` is the entropy of ``z`` plus
the sample mean of that correction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators
from .errors import Diverged, TooFewSamples
from .estimators import EstimateReport
from .flow import CDF_FLOOR, FlowModel, TrainConfig, gaussian_cdf, normal_logpdf, train
from .samples import SampleSet, as_samples

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UniformizedSet:
    z: np.ndarray
    corrections: np.ndarray


@dataclass(frozen=True)
class UmConfig:
    base_estimator: str = "tKSG"
    k: int = 1
    split_fraction: float = 0.5
    flow: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    reuse_training: bool = False

    def __post_init__(self):
        if self.base_estimator not in ("tKL", "tKSG"):
            raise ValueError("base_estimator must be tKL or tKSG")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must be in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be positive")

    @property
    def name(self):
        return f"UM-{self.base_estimator}"

    def to_dict(self):
        return {"kind": self.name, "k": self.k, "split_fraction": self.split_fraction,
                "seed": self.seed, "reuse_training": self.reuse_training,
                "flow": vars(self.flow).copy()}


def uniformize(model: FlowModel, samples) -> UniformizedSet:
    """Apply ``Phi o g`` and return points in (0,1)^d with their corrections."""
    s = as_samples(samples)
    if model.d != s.d:
        raise ValueError(f"model dimension {model.d} != sample dimension {s.d}")
    y, log_det = model.push_to_base(s.data)
    y = np.atleast_2d(y)
    corrections = -(normal_logpdf(y).sum(axis=1) + np.atleast_1d(log_det))
    return UniformizedSet(z=gaussian_cdf(y), corrections=corrections)


def _split(n, cfg: UmConfig, rng):
    if cfg.reuse_training:
        idx = np.arange(n)
        return idx, idx
    perm = rng.permutation(n)
    n_train = int(round(cfg.split_fraction * n))
    return perm[:n_train], perm[n_train:]


def fit_flow(samples, cfg: TrainConfig) -> FlowModel:
    """Train, retrying once at half the learning rate if training diverges."""
    try:
        return train(samples, cfg)
    except Diverged as exc:
        log.warning("flow training diverged (%s); retrying with halved learning rate", exc)
        return train(samples, replace(cfg, learning_rate=cfg.learning_rate / 2))


def _prepare(samples, cfg: UmConfig, model: FlowModel | None):
    s = as_samples(samples)
    if model is not None:
        return s, model, {"n_train": 0, "n_estimate": s.n, "flow": "frozen"}
    if s.n < 4:
        raise TooFewSamples("the uniformizing pipeline needs at least 4 samples")
    split_seq, flow_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    train_idx, est_idx = _split(s.n, cfg, np.random.default_rng(split_seq))
    if len(est_idx) < cfg.k + 1 or len(train_idx) < 2:
        raise TooFewSamples(f"split sizes {len(train_idx)}/{len(est_idx)} too small for k={cfg.k}")
    flow_cfg = replace(cfg.flow, seed=int(flow_seq.generate_state(1)[0]))
    model = fit_flow(s.data[train_idx], flow_cfg)
    info = {"n_train": int(len(train_idx)), "n_estimate": int(len(est_idx)), "flow": "trained"}
    return s.subset(est_idx), model, info


def um_estimate(samples, config: UmConfig | None = None, model: FlowModel | None = None) -> EstimateReport:
    """Uniformize, estimate the entropy of ``z``, add the mean correction.

    With ``model`` given the flow is used as-is and every sample goes to
    the estimate; otherwise the samples are split, a flow is trained on
    one part and the other part is estimated.
    """
    cfg = config or UmConfig()
    t0 = time.perf_counter()
    est_set, model, info = _prepare(samples, cfg, model)
    u = uniformize(model, est_set)
    base_cfg = estimators.EstimatorConfig(cfg.base_estimator, cfg.k)
    # Phi is clamped, so saturated coordinates can tie exactly.
    base = estimators.estimate(SampleSet(u.z), base_cfg, min_length=CDF_FLOOR).value
    corr = float(np.mean(u.corrections))
    return EstimateReport(value=base + corr, estimator=cfg, n_used=est_set.n, d=est_set.d,
                          seed=cfg.seed, wall_time=time.perf_counter() - t0, rng="PCG64",
                          components={"base": base, "correction": corr, **info})


def nf_only_estimate(samples, config: UmConfig | None = None, model: FlowModel | None = None) -> EstimateReport:
    """Same pipeline, but the entropy of ``z`` is taken to be zero."""
    cfg = config or UmConfig()
    t0 = time.perf_counter()
    est_set, model, info = _prepare(samples, cfg, model)
    corr = float(np.mean(uniformize(model, est_set).corrections))
    return EstimateReport(value=corr, estimator=NfConfig(cfg), n_used=est_set.n, d=est_set.d,
                          seed=cfg.seed, wall_time=time.perf_counter() - t0, rng="PCG64",
                          components={"correction": corr, **info})


@dataclass(frozen=True)
class NfConfig:
    """Marks a report as coming from the flow-only estimator."""

    um: UmConfig

    name = "NF"

    def to_dict(self):
        return {**self.um.to_dict(), "kind": "NF"}
