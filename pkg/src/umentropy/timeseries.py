"""Nonlinear autoregressive simulators and block-entropy entropy rates.

For an order-p Markov process the entropy rate is the difference of two
block entropies, H(X_{p+1..1}) - H(X_{p..1}), both estimated from the
delay-embedded trajectory. Embedded rows overlap, so they are not
independent draws; the estimators are applied to them regardless.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import Diverged
from .samples import SampleSet

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6


def _ar3(h):
    # h[0] is x_{t-1}, h[1] is x_{t-2}, ...
    return -1.35 + 0.5 * h[0] + 0.4 * h[1] ** 2 - 0.3 * h[2]


def _ar7(h):
    return -1.35 + 0.5 * h[0] + 0.3 * h[4] ** 2 - 0.3 * h[6]


def _ar15(h):
    return (-1.35 + 0.5 * h[0] + 0.05 * (h[4] + h[5] + h[6]) ** 2
            - 0.005 * (h[10] + h[11] + h[12]) ** 2 - 0.1 * h[14])


_PRESETS = {"ar3": (3, _ar3), "ar7": (7, _ar7), "ar15": (15, _ar15)}


@dataclass(frozen=True)
class ArModel:
    """``x_t = rule(x_{t-1}, ..., x_{t-p}) + noise_sigma * N(0, 1)``.

    ``rule`` receives the history newest-first.
    """

    order: int
    rule: Callable
    noise_sigma: float = 0.03
    name: str = "custom"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")

    @classmethod
    def preset(cls, name: str, noise_sigma: float = 0.03) -> "ArModel":
        key = name.lower().replace("(", "").replace(")", "")
        if key not in _PRESETS:
            raise ValueError(f"unknown AR preset {name!r}; choose from {sorted(_PRESETS)}")
        order, rule = _PRESETS[key]
        return cls(order, rule, noise_sigma, key)

    def fixed_point(self, lo=-3.0, hi=3.0):
        """Smallest-magnitude fixed point of the noise-free map in [lo, hi], or None."""
        grid = np.linspace(lo, hi, 6001)
        f = np.array([self.rule(np.full(self.order, g)) - g for g in grid])
        roots = []
        for i in np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) <= 0):
            a, b = grid[i], grid[i + 1]
            fa = f[i]
            for _ in range(80):
                m = 0.5 * (a + b)
                fm = self.rule(np.full(self.order, m)) - m
                if np.sign(fm) == np.sign(fa) and fm != 0:
                    a, fa = m, fm
                else:
                    b = m
            roots.append(0.5 * (a + b))
        return min(roots, key=abs) if roots else None


@dataclass(frozen=True, eq=False)
class Trajectory:
    values: np.ndarray
    model: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def simulate_ar(model: ArModel, T: int, burn_in: int = 1000, seed=None, start=None) -> Trajectory:
    """Run the recursion for ``burn_in + T`` steps and keep the last ``T``.

    The first ``order`` values default to the noise-free fixed point (or
    zeros when there is none in [-3, 3]).
    """
    p = model.order
    if T < p + 2:
        raise ValueError(f"T must be at least order + 2 = {p + 2}")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    if start is None:
        fp = model.fixed_point()
        start = np.full(p, 0.0 if fp is None else fp)
    start = np.asarray(start, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    total = burn_in + T
    noise = model.noise_sigma * rng.standard_normal(total)
    x = np.empty(p + total)
    x[:p] = start[::-1]  # chronological; start is newest-first
    for t in range(p, p + total):
        x[t] = model.rule(x[t - p:t][::-1]) + noise[t - p]
        if not abs(x[t]) <= DIVERGENCE_BOUND:
            raise Diverged(f"trajectory left |x| <= {DIVERGENCE_BOUND:g} at step {t - p}")
    return Trajectory(x[p + burn_in:], model.name, seed)


def delay_embed(traj, m: int, stride: int = 1) -> np.ndarray:
    """Rows ``(x_{r+m-1}, ..., x_r)``: newest coordinate first.

    Returned as a plain array since a single-row embedding is allowed.
    ``stride`` keeps every stride-th block.
    """
    v = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    T = len(v)
    if not 1 <= m <= T:
        raise ValueError(f"block length must be in 1..{T}")
    idx = np.arange(T - m + 1)[:, None] + np.arange(m - 1, -1, -1)[None, :]
    return v[idx[::stride]]


def true_gaussian_rate(sigma: float) -> float:
    """Entropy rate of additive Gaussian noise, 0.5 * log(2 pi e sigma^2)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return 0.5 * float(np.log(2 * np.pi * np.e * sigma * sigma))


def entropy_rate(traj, p: int, estimator, stride: int = 1):
    """Block-entropy difference ``H(blocks of p+1) - H(blocks of p)``.

    ``estimator`` is an :class:`~umentropy.estimators.EstimatorConfig`, a
    :class:`~umentropy.uniformize.UmConfig` or an ``NfConfig``. Flow-based
    estimators get independent seeds for the two block entropies.
    """
    from .api import run_estimator
    from .estimators import EstimateReport

    v = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    if len(v) < 50 * p:
        warnings.warn(f"trajectory length {len(v)} is short for order {p}", stacklevel=2)
    seed = getattr(estimator, "seed", None)
    if seed is None and hasattr(estimator, "um"):
        seed = estimator.um.seed
    seeds = np.random.SeedSequence(seed).generate_state(2) if seed is not None else (None, None)
    upper = run_estimator(SampleSet(delay_embed(v, p + 1, stride)), estimator, seeds[0])
    lower = run_estimator(SampleSet(delay_embed(v, p, stride)), estimator, seeds[1])
    return EstimateReport(
        value=upper.value - lower.value,
        estimator=estimator,
        n_used=upper.n_used,
        d=p + 1,
        seed=seed,
        wall_time=upper.wall_time + lower.wall_time,
        rng=upper.rng,
        components={"upper": upper.value, "lower": lower.value},
    )


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"])
        for v in traj.values:
            w.writerow([repr(float(v))])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or len(rows[0]) != 1:
        raise ValueError(f"{path}: expected a single-column CSV")
    body = rows[1:] if rows[0][0].strip() == "x" else rows
    return Trajectory(np.array([float(r[0]) for r in body]))
