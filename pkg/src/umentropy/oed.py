"""Maximum entropy sampling for the Lotka-Volterra predator-prey model.

The model is

    dx/dt = a x - x y,    dy/dt = b x y - y,

observed with additive Gaussian noise at ``d`` times. A design is a Beta
distribution shape ``(alpha, beta)``; its observation times are the Beta
quantiles ``t_i = T Q(i / (d + 1); alpha, beta)``. The utility of a design
is the entropy of the observations, estimated from simulated data, and
the search is a plain grid search.

A nested Monte Carlo estimate of the same entropy (it uses the Gaussian
likelihood, so it needs no density estimator) serves as the reference.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv, logsumexp

from .errors import NonFinite
from .samples import SampleSet

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LvConfig:
    """Prior box for (a, b), initial populations, noise variance, horizon, step."""

    a_bounds: tuple = (0.5, 4.0)
    b_bounds: tuple = (0.5, 4.0)
    x0: float = 1.0
    y0: float = 0.5
    noise_var: float = 0.01
    t_end: float = 10.0
    dt: float = 1e-3

    def __post_init__(self):
        for name in ("a_bounds", "b_bounds"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not (self.x0 > 0 and self.y0 > 0):
            raise ValueError("initial populations must be positive")
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be non-negative")

    def draw_prior(self, rng, n):
        """(a, b) drawn uniformly from the prior box: all a first, then all b."""
        a = rng.uniform(*self.a_bounds, size=n)
        b = rng.uniform(*self.b_bounds, size=n)
        return a, b


def _lv_rhs(x, y, a, b):
    xy = x * y
    return a * x - xy, b * xy - y


def lv_integrate(a, b, lv: LvConfig, query_times):
    """Classical RK4 with fixed step ``lv.dt`` and cubic Hermite dense output.

    ``a`` and ``b`` may be scalars or equal-length arrays (one trajectory
    each). Returns ``(x, y)`` with shape ``(n, len(query_times))``, or
    ``(len(query_times),)`` for scalar parameters.
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    a, b = np.broadcast_arrays(a, b)
    t = np.atleast_1d(np.asarray(query_times, dtype=np.float64))
    if np.any(t < 0) or np.any(t > lv.t_end * (1 + 1e-12)):
        raise ValueError(f"query times must lie in [0, {lv.t_end}]")

    h = lv.dt
    n_steps = int(np.ceil(lv.t_end / h - 1e-9))
    step_of = np.minimum((t / h).astype(np.int64), n_steps - 1)
    theta = t / h - step_of  # position inside the step, in [0, 1]
    wanted = {}
    for q, s in enumerate(step_of):
        wanted.setdefault(int(s), []).append(q)

    out_x = np.empty((len(a), len(t)))
    out_y = np.empty((len(a), len(t)))
    x = np.full(len(a), float(lv.x0))
    y = np.full(len(a), float(lv.y0))
    fx, fy = _lv_rhs(x, y, a, b)
    last = max(wanted) if wanted else -1
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(last + 1):
            k2x, k2y = _lv_rhs(x + 0.5 * h * fx, y + 0.5 * h * fy, a, b)
            k3x, k3y = _lv_rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y, a, b)
            k4x, k4y = _lv_rhs(x + h * k3x, y + h * k3y, a, b)
            nx = x + h / 6 * (fx + 2 * k2x + 2 * k3x + k4x)
            ny = y + h / 6 * (fy + 2 * k2y + 2 * k3y + k4y)
            nfx, nfy = _lv_rhs(nx, ny, a, b)
            if s in wanted:
                for q in wanted[s]:
                    out_x[:, q] = _hermite(x, nx, fx, nfx, theta[q], h)
                    out_y[:, q] = _hermite(y, ny, fy, nfy, theta[q], h)
            x, y, fx, fy = nx, ny, nfx, nfy
    if not (np.all(np.isfinite(out_x)) and np.all(np.isfinite(out_y))):
        raise NonFinite("Lotka-Volterra populations overflowed")
    if scalar:
        return out_x[0], out_y[0]
    return out_x, out_y


def _hermite(p0, p1, m0, m1, s, h):
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * m0
            + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * m1)


@dataclass(frozen=True)
class DesignSchedule:
    alpha: float
    beta: float
    times: tuple
    t_end: float = 10.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("a schedule needs at least one time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if t[0] <= 0 or t[-1] >= self.t_end:
            raise ValueError("observation times must lie strictly inside (0, t_end)")
        object.__setattr__(self, "times", tuple(float(v) for v in t))

    @property
    def d(self):
        return len(self.times)

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "times": list(self.times), "t_end": self.t_end}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["alpha"], doc["beta"], tuple(doc["times"]), doc.get("t_end", 10.0))


def beta_schedule(alpha: float, beta: float, d: int = 5, t_end: float = 10.0) -> DesignSchedule:
    """Times at the Beta(alpha, beta) quantiles i / (d + 1), scaled by ``t_end``."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    q = np.arange(1, d + 1) / (d + 1)
    times = t_end * betaincinv(alpha, beta, q)
    if not (times[0] > 0 and times[-1] < t_end and np.all(np.diff(times) > 0)):
        # Very skewed Beta shapes push quantiles onto 0 or t_end in float64.
        raise ValueError(f"Beta({alpha:g}, {beta:g}) quantiles are not distinct inside "
                         f"(0, {t_end:g}) in double precision for d={d}")
    return DesignSchedule(float(alpha), float(beta), tuple(times), float(t_end))


def write_schedule(schedule: DesignSchedule, path) -> None:
    with open(path, "w") as fh:
        json.dump(schedule.to_dict(), fh, indent=2)


def read_schedule(path) -> DesignSchedule:
    with open(path) as fh:
        return DesignSchedule.from_dict(json.load(fh))


def _interleave(x, y):
    """(n, d) prey and predator readings -> rows (x(t1), y(t1), ..., x(td), y(td))."""
    out = np.empty((x.shape[0], 2 * x.shape[1]))
    out[:, 0::2] = x
    out[:, 1::2] = y
    return out


def sample_design_data(schedule: DesignSchedule, lv: LvConfig, n: int, seed=None) -> np.ndarray:
    """Simulate ``n`` noisy observation vectors for one design.

    Draw order from the seeded PCG64 stream: all ``a``, all ``b``, then the
    ``(n, 2d)`` standard normal noise. Returns a plain array (``n = 1`` is
    allowed); wrap it in a :class:`SampleSet` for estimation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    a, b = lv.draw_prior(rng, n)
    noise = rng.standard_normal((n, 2 * schedule.d))
    x, y = lv_integrate(a, b, lv, schedule.times)
    return _interleave(x, y) + np.sqrt(lv.noise_var) * noise


def default_grid(n_alpha: int = 8, n_beta: int = 8, lo: float = 0.3, hi: float = 5.0):
    """Logarithmic (alpha, beta) grid, alpha-major."""
    al = np.geomspace(lo, hi, n_alpha)
    be = np.geomspace(lo, hi, n_beta)
    return [(float(a), float(b)) for a in al for b in be]


@dataclass
class SearchResult:
    best: DesignSchedule
    table: list = field(default_factory=list)  # dicts: alpha, beta, utility, stderr

    def write_table(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "beta", "utility", "stderr"])
            for row in self.table:
                w.writerow([repr(row["alpha"]), repr(row["beta"]),
                            repr(row["utility"]), repr(row["stderr"])])


def mes_search(grid, lv: LvConfig, n: int, estimator, d: int = 5, seed: int = 0,
               repeats: int = 1) -> SearchResult:
    """Grid search for the design whose observations have maximal entropy.

    Every grid point sees the same prior draws and the same standard normal
    noise (common random numbers), so differences between utilities come
    from the designs rather than the draws; all trajectories are integrated
    once for the union of the grid's observation times. ``estimator`` is
    anything :func:`umentropy.api.run_estimator` accepts; flow-based
    estimators get the same seed at every grid point. With ``repeats > 1``
    the utility is the mean over independent replicate data sets and
    ``stderr`` their standard error, otherwise ``stderr`` is NaN. Ties go
    to the lexicographically smallest ``(alpha, beta)``.
    """
    from .api import run_estimator

    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ValueError("the design grid is empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    schedules = [beta_schedule(a, b, d, lv.t_end) for a, b in grid]
    union = np.unique(np.concatenate([s.times for s in schedules]))

    per_point = [[] for _ in grid]
    streams = np.random.SeedSequence(seed).spawn(repeats)
    for stream in streams:
        data_seq, est_seq = stream.spawn(2)
        rng = np.random.Generator(np.random.PCG64(data_seq))
        a, b = lv.draw_prior(rng, n)
        noise = np.sqrt(lv.noise_var) * rng.standard_normal((n, 2 * d))
        xs, ys = lv_integrate(a, b, lv, union)
        est_seed = int(est_seq.generate_state(1)[0])
        for g, sched in enumerate(schedules):
            cols = np.searchsorted(union, sched.times)
            data = _interleave(xs[:, cols], ys[:, cols]) + noise
            per_point[g].append(run_estimator(SampleSet(data), estimator, est_seed).value)

    table = []
    for (a, b), vals in zip(grid, per_point):
        vals = np.asarray(vals)
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        table.append({"alpha": a, "beta": b, "utility": float(vals.mean()), "stderr": se})
    best_row = min(table, key=lambda r: (-r["utility"], r["alpha"], r["beta"]))
    best = schedules[grid.index((best_row["alpha"], best_row["beta"]))]
    return SearchResult(best, table)


@dataclass(frozen=True)
class NmcConfig:
    M: int = 2000
    N_inner: int = 2000
    seed: int = 0
    chunk: int = 128

    def __post_init__(self):
        if self.M < 1 or self.N_inner < 1 or self.chunk < 1:
            raise ValueError("M, N_inner and chunk must be >= 1")


def gaussian_loglik(y, means, var):
    """``log N(y_i; means_j, var I)`` for every pair: an (M, N) matrix."""
    y = np.atleast_2d(y)
    means = np.atleast_2d(means)
    sq = np.sum((y[:, None, :] - means[None, :, :]) ** 2, axis=2)
    return -0.5 * y.shape[1] * (LOG_2PI + np.log(var)) - 0.5 * sq / var


def nested_mc_entropy(outer_y, inner_means, var, chunk: int = 128):
    """``-(1/M) sum_i log((1/N) sum_j p(y_i | theta_j))`` for a Gaussian likelihood.

    ``outer_y`` is (M, D) data, ``inner_means`` the (N, D) noise-free
    predictions of the inner parameter draws. The inner average is taken
    with log-sum-exp; rows are processed in chunks in a fixed order.
    """
    outer_y = np.atleast_2d(outer_y)
    inner_means = np.atleast_2d(inner_means)
    n_inner = inner_means.shape[0]
    total = 0.0
    for start in range(0, len(outer_y), chunk):
        ll = gaussian_loglik(outer_y[start:start + chunk], inner_means, var)
        total += float(np.sum(logsumexp(ll, axis=1) - np.log(n_inner)))
    return -total / len(outer_y)


def nmc_entropy(schedule: DesignSchedule, lv: LvConfig, cfg: NmcConfig | None = None) -> float:
    """Nested Monte Carlo reference for the entropy of a design's observations.

    Draw order: ``M`` outer parameters, their noise, then ``N_inner``
    independent inner parameters. The inner draws are independent of the
    outer ones, so for finite ``N_inner`` the estimate is biased upward.
    """
    cfg = cfg or NmcConfig()
    if not lv.noise_var > 0:
        raise ValueError("the nested estimator needs a positive noise variance")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    a_out, b_out = lv.draw_prior(rng, cfg.M)
    noise = np.sqrt(lv.noise_var) * rng.standard_normal((cfg.M, 2 * schedule.d))
    a_in, b_in = lv.draw_prior(rng, cfg.N_inner)
    x, y = lv_integrate(np.concatenate([a_out, a_in]), np.concatenate([b_out, b_in]),
                        lv, schedule.times)
    means = _interleave(x, y)
    outer_y = means[:cfg.M] + noise
    return nested_mc_entropy(outer_y, means[cfg.M:], lv.noise_var, cfg.chunk)
