"""Special functions used by the k-NN estimators."""

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

# Bernoulli-number coefficients B_{2n} / (2n) of the asymptotic series
# psi(x) ~ log x - 1/(2x) - sum_n B_{2n} / (2n x^{2n}).
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_SHIFT_TO = 10.0


def digamma(x):
    """Digamma function for positive real arguments.

    Arguments below 10 are shifted upward with psi(x) = psi(x + 1) - 1/x;
    the asymptotic expansion is then accurate to double precision.
    Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("digamma is only defined here for x > 0")
    z = arr.copy()
    acc = np.zeros_like(z)
    while True:
        low = z < _SHIFT_TO
        if not np.any(low):
            break
        acc = np.where(low, acc - 1.0 / np.where(low, z, 1.0), acc)
        z = np.where(low, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    out = np.log(z) - 0.5 / z - series + acc
    return float(out) if np.ndim(x) == 0 else out


def log_unit_ball_volume(d: int, p=np.inf) -> float:
    """log c_d, where c_d = Gamma(1 + 1/p)^d / Gamma(1 + d/p).

    c_d is the volume of the p-norm ball of *diameter* one, which is
    the normalization the estimators use with doubled k-NN distances.
    For p = inf the ball is the unit cube and the log volume is 0.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if p in (np.inf, "inf") or np.isinf(float(p)):
        return 0.0
    p = float(p)
    return float(d * gammaln(1.0 + 1.0 / p) - gammaln(1.0 + d / p))
