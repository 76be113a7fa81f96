"""Benchmark distributions with exact samplers, log-densities and entropies.

The Rosenbrock families are triangular: with ``y = x_child - x_parent**2``
the change of variables has unit Jacobian and makes every component
independent, which gives both the sampler and the closed-form entropy.

Random numbers come from numpy's PCG64 generator. Chunked generation uses
``SeedSequence(seed).spawn(n_chunks)``, one child stream per chunk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .samples import SampleSet
from .special import digamma

RNG_NAME = "PCG64"


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class StdNormal:
    d: int

    @property
    def dim(self):
        return self.d

    def _sample(self, rng, n):
        return rng.standard_normal((n, self.d))

    def log_density(self, x):
        x = np.atleast_2d(x)
        return -0.5 * self.d * np.log(2 * np.pi) - 0.5 * np.sum(x * x, axis=1)

    def entropy(self):
        return 0.5 * self.d * np.log(2 * np.pi * np.e)


@dataclass(frozen=True)
class SymBeta:
    """Independent Beta(b, b) coordinates on the unit cube."""

    d: int
    b: float

    @property
    def dim(self):
        return self.d

    def _sample(self, rng, n):
        g1 = rng.standard_gamma(self.b, size=(n, self.d))
        g2 = rng.standard_gamma(self.b, size=(n, self.d))
        return g1 / (g1 + g2)

    def log_density(self, x):
        x = np.atleast_2d(x)
        with np.errstate(divide="ignore"):
            lp = (self.b - 1) * (np.log(x) + np.log1p(-x)) - betaln(self.b, self.b)
        inside = np.all((x >= 0) & (x <= 1), axis=1)
        return np.where(inside, lp.sum(axis=1), -np.inf)

    def entropy(self):
        b = self.b
        return self.d * (betaln(b, b) - 2 * (b - 1) * (digamma(b) - digamma(2 * b)))


def _hybrid_parents(n1, n2):
    # Column layout: x1 first, then block j holds x_{j,2..n1}.
    parents = [-1]
    for j in range(n2):
        for i in range(2, n1 + 1):
            col = len(parents)
            parents.append(0 if i == 2 else col - 1)
    return parents


class _Triangular:
    """Shared machinery: each coordinate is parent**2 + independent noise."""

    parents: list
    locs: np.ndarray
    widths: np.ndarray
    uniform: bool

    @property
    def dim(self):
        return len(self.parents)

    def _centers(self, x, col):
        p = self.parents[col]
        return self.locs[col] if p < 0 else x[:, p] ** 2

    def _sample(self, rng, n):
        x = np.empty((n, self.dim))
        for col in range(self.dim):
            if self.uniform:
                noise = rng.uniform(-self.widths[col], self.widths[col], size=n)
            else:
                noise = self.widths[col] * rng.standard_normal(n)
            x[:, col] = self._centers(x, col) + noise
        return x

    def residuals(self, x):
        """The independent components ``x_col - center(parent)``."""
        x = np.atleast_2d(x)
        return np.column_stack([x[:, c] - self._centers(x, c) for c in range(self.dim)])

    def log_density(self, x):
        r = self.residuals(x)
        w = self.widths
        if self.uniform:
            inside = np.all(np.abs(r) <= w, axis=1)
            return np.where(inside, -np.sum(np.log(2 * w)), -np.inf)
        return np.sum(-0.5 * np.log(2 * np.pi * w * w) - 0.5 * (r / w) ** 2, axis=1)

    def entropy(self):
        w = self.widths
        if self.uniform:
            return float(np.sum(np.log(2 * w)))
        return float(np.sum(0.5 * np.log(2 * np.pi * np.e * w * w)))


@dataclass(frozen=True)
class HybridRosenbrock(_Triangular):
    """Density proportional to exp(-a(x1-mu)^2 - sum b (x_{j,i} - x_{j,i-1}^2)^2)."""

    n1: int = 4
    n2: int = 1
    a: float = 1.0
    b: float = 0.1
    mu: float = 1.0
    uniform = False

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 1 or self.a <= 0 or self.b <= 0:
            raise ValueError("invalid hybrid Rosenbrock parameters")
        d = (self.n1 - 1) * self.n2 + 1
        object.__setattr__(self, "parents", _hybrid_parents(self.n1, self.n2))
        locs = np.zeros(d)
        locs[0] = self.mu
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "widths", self._widths(d))

    def _widths(self, d):
        # Gaussian: standard deviations sqrt(1/(2a)), sqrt(1/(2b)).
        w = np.full(d, np.sqrt(1 / (2 * self.b)))
        w[0] = np.sqrt(1 / (2 * self.a))
        return w


@dataclass(frozen=True)
class HybridRosenbrockUniform(HybridRosenbrock):
    """Each Gaussian factor replaced by a uniform of half-width sqrt(1/(8 .))."""

    uniform = True

    def _widths(self, d):
        w = np.full(d, np.sqrt(1 / (8 * self.b)))
        w[0] = np.sqrt(1 / (8 * self.a))
        return w


@dataclass(frozen=True)
class EvenRosenbrock(_Triangular):
    """Independent 2-D bananas: x_odd ~ N(mu, 1/2), x_even | x_odd ~ N(x_odd^2, 1/(2c))."""

    d: int = 2
    mu_odd: float = 0.0
    c: float = 12.5
    uniform = False

    def __post_init__(self):
        if self.d < 2 or self.d % 2 or self.c <= 0:
            raise ValueError("even Rosenbrock needs an even d >= 2 and c > 0")
        parents = []
        for i in range(self.d // 2):
            parents += [-1, 2 * i]
        object.__setattr__(self, "parents", parents)
        locs = np.zeros(self.d)
        locs[0::2] = self.mu_odd
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "widths", self._widths())

    def _widths(self):
        w = np.empty(self.d)
        w[0::2] = np.sqrt(0.5)
        w[1::2] = np.sqrt(1 / (2 * self.c))
        return w


@dataclass(frozen=True)
class EvenRosenbrockUniform(EvenRosenbrock):
    """Uniform factors: half-width 0.5 for odd coordinates and c for even ones."""

    c: float = 0.025
    uniform = True

    def _widths(self):
        w = np.empty(self.d)
        w[0::2] = 0.5
        w[1::2] = self.c
        return w


FAMILIES = {
    "normal": StdNormal,
    "beta": SymBeta,
    "hybrid-rosenbrock": HybridRosenbrock,
    "even-rosenbrock": EvenRosenbrock,
    "hybrid-rosenbrock-uniform": HybridRosenbrockUniform,
    "even-rosenbrock-uniform": EvenRosenbrockUniform,
}


def make(family: str, **params):
    try:
        return FAMILIES[family](**params)
    except KeyError:
        raise ValueError(f"unknown distribution {family!r}; choose from {sorted(FAMILIES)}") from None


def draw(spec, n: int, seed=None, chunk_size: int | None = None) -> np.ndarray:
    """Draw ``n >= 1`` i.i.d. rows as a plain array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if chunk_size is None or chunk_size >= n:
        return spec._sample(make_rng(seed), n)
    n_chunks = -(-n // chunk_size)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    return np.vstack([spec._sample(make_rng(s), min(chunk_size, n - i * chunk_size))
                      for i, s in enumerate(streams)])


def sample(spec, n: int, seed=None, chunk_size: int | None = None) -> SampleSet:
    """Draw ``n`` i.i.d. samples; identical ``seed`` gives identical output.

    A ``SampleSet`` holds at least two rows; use :func:`draw` for ``n = 1``.
    """
    return SampleSet(draw(spec, n, seed, chunk_size))


def analytic_entropy(spec) -> float:
    """Exact differential entropy in nats."""
    return float(spec.entropy())


def log_density(spec, x) -> np.ndarray:
    return spec.log_density(x)


def mc_entropy(spec, m: int, seed=None):
    """Monte Carlo -E[log p(x)] and its standard error."""
    x = spec._sample(make_rng(seed), m)
    lp = spec.log_density(x)
    return float(-lp.mean()), float(lp.std(ddof=1) / np.sqrt(m))


# Experiment grids used by the benchmark harness.
PRESETS = {
    "beta": [dict(d=d, b=b) for b in (1.0, 1.5, 2.0) for d in range(1, 41)],
    "normal": [dict(d=d) for d in range(1, 41)],
    "hybrid-rosenbrock": [dict(n1=4, n2=n2, a=1.0, b=0.1, mu=1.0) for n2 in range(1, 8)],
    "even-rosenbrock": [dict(d=d, mu_odd=0.0, c=12.5) for d in range(2, 23, 2)],
    "hybrid-rosenbrock-uniform": [dict(n1=4, n2=n2, a=1.0, b=0.1, mu=1.0) for n2 in range(1, 8)],
    "even-rosenbrock-uniform": [dict(d=d, mu_odd=0.0, c=0.025) for d in range(2, 23, 2)],
}
