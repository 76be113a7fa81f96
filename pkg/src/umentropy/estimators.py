"""Kozachenko-Leonenko and KSG entropy estimators and their truncated variants.

All values are in nats. The truncated estimators expect data on the unit
cube and never rescale silently; use :func:`rescale_to_unit_cube` to map a
bounded sample there and add back the returned log-volume.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import knn
from .errors import NonFinite
from .samples import SampleSet, as_samples
from .special import digamma, log_unit_ball_volume

KINDS = ("KL", "KSG", "tKL", "tKSG")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "tKL"
    k: int = 1
    p: float = np.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; expected one of {KINDS}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.kind != "KL" and not np.isinf(float(self.p)):
            raise ValueError(f"{self.kind} is defined for the max norm only")

    @property
    def name(self) -> str:
        return self.kind

    def to_dict(self):
        return {"kind": self.kind, "k": int(self.k), "p": "inf" if np.isinf(float(self.p)) else float(self.p)}


@dataclass
class EstimateReport:
    """An entropy estimate plus enough metadata to reproduce it."""

    value: float
    estimator: object
    n_used: int
    d: int
    seed: int | None = None
    wall_time: float = 0.0
    rng: str | None = None
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NonFinite(f"estimate is not finite: {self.value}")

    def __float__(self):
        return float(self.value)

    def to_dict(self):
        est = self.estimator.to_dict() if hasattr(self.estimator, "to_dict") else str(self.estimator)
        out = asdict(self)
        out["estimator"] = est
        return out


def _offset(n, k):
    return digamma(n) - digamma(k)


def _finish(value, cfg, s, t0, **components):
    return EstimateReport(
        value=float(value),
        estimator=cfg,
        n_used=s.n,
        d=s.d,
        wall_time=time.perf_counter() - t0,
        components=components,
    )


def _log_sum(lengths, min_length=0.0):
    if min_length > 0:
        lengths = np.maximum(lengths, min_length)
    if np.any(lengths <= 0):
        raise NonFinite("a cell side length is zero; samples share a coordinate")
    return float(np.sum(np.log(lengths)))


def kl_estimate(samples, config: EstimatorConfig | None = None, *, k: int | None = None,
                p=None, backend: str = "auto") -> EstimateReport:
    """Kozachenko-Leonenko estimator with a p-norm ball cell."""
    cfg = config or EstimatorConfig("KL", k or 1, np.inf if p is None else p)
    t0 = time.perf_counter()
    s = as_samples(samples)
    eps = knn.knn_radii(s, cfg.k, cfg.p, backend)
    value = _offset(s.n, cfg.k) + log_unit_ball_volume(s.d, cfg.p) + s.d * _log_sum(eps) / s.n
    return _finish(value, cfg, s, t0)


def ksg_estimate(samples, k: int = 1, backend: str = "auto") -> EstimateReport:
    """KSG-style entropy estimator with per-dimension rectangle cells."""
    cfg = EstimatorConfig("KSG", k)
    t0 = time.perf_counter()
    s = as_samples(samples)
    em = knn.marginal_radii(s, cfg.k, backend)
    value = _offset(s.n, cfg.k) + (s.d - 1) / cfg.k + _log_sum(em) / s.n
    return _finish(value, cfg, s, t0)


def tkl_estimate(samples, k: int = 1, backend: str = "auto", min_length: float = 0.0) -> EstimateReport:
    """Truncated KL: max-norm cube cells clipped to the unit cube.

    ``min_length`` floors the side lengths; it is only meant for data whose
    coordinates are quantized (e.g. a clamped CDF), where ties are an
    artifact of the representation rather than of the sample.
    """
    cfg = EstimatorConfig("tKL", k)
    t0 = time.perf_counter()
    s = as_samples(samples)
    eps = knn.knn_radii(s, cfg.k, np.inf, backend)
    xi = knn.truncated_lengths(s, np.repeat(eps[:, None] / 2.0, s.d, axis=1))
    value = _offset(s.n, cfg.k) + _log_sum(xi, min_length) / s.n
    return _finish(value, cfg, s, t0)


def tksg_estimate(samples, k: int = 1, backend: str = "auto", min_length: float = 0.0) -> EstimateReport:
    """Truncated KSG: rectangle cells clipped to the unit cube."""
    cfg = EstimatorConfig("tKSG", k)
    t0 = time.perf_counter()
    s = as_samples(samples)
    em = knn.marginal_radii(s, cfg.k, backend)
    if min_length > 0:
        em = np.maximum(em, min_length)
    if np.any(em <= 0):
        raise NonFinite("a cell side length is zero; samples share a coordinate")
    zeta = knn.truncated_lengths(s, em / 2.0)
    value = _offset(s.n, cfg.k) + (s.d - 1) / cfg.k + _log_sum(zeta, min_length) / s.n
    return _finish(value, cfg, s, t0)


def estimate(samples, config: EstimatorConfig, **kw) -> EstimateReport:
    """Dispatch on ``config.kind``; extra keywords go to the truncated estimators."""
    if config.kind == "KL":
        return kl_estimate(samples, config)
    if config.kind == "KSG":
        return ksg_estimate(samples, config.k)
    if config.kind == "tKL":
        return tkl_estimate(samples, config.k, **kw)
    return tksg_estimate(samples, config.k, **kw)


def rescale_to_unit_cube(samples):
    """Min-max rescale each coordinate onto [0, 1].

    Returns ``(rescaled, log_volume)``. The entropy of the original sample
    is the entropy of the rescaled one plus ``log_volume``.
    """
    s = as_samples(samples)
    lo = s.data.min(axis=0)
    span = s.data.max(axis=0) - lo
    if np.any(span <= 0):
        raise ValueError("cannot rescale a constant coordinate")
    z = (s.data - lo) / span
    return SampleSet(np.clip(z, 0.0, 1.0)), float(np.sum(np.log(span)))
