import mpmath
import numpy as np
import pytest
from scipy.special import gammaln

from umentropy.errors import DomainError
from umentropy.special import digamma, log_unit_ball_volume


@pytest.mark.parametrize("x, expected", [(1.0, -0.5772156649015329),
                                         (2.0, 0.42278433509846713),
                                         (0.5, -1.9635100260214235)])
def test_known_values(x, expected):
    assert digamma(x) == pytest.approx(expected, abs=1e-12)


def test_against_mpmath():
    xs = np.geomspace(1e-3, 1e6, 400)
    ref = np.array([float(mpmath.digamma(mpmath.mpf(float(x)))) for x in xs])
    err = np.abs(digamma(xs) - ref) / np.maximum(1.0, np.abs(ref))
    assert err.max() < 1e-12


def test_recurrence():
    x = np.linspace(0.5, 100, 997)
    assert np.max(np.abs(digamma(x + 1) - digamma(x) - 1 / x)) < 1e-12


@pytest.mark.parametrize("bad", [0.0, -1.0, -2.5])
def test_domain(bad):
    with pytest.raises(DomainError):
        digamma(bad)


def test_scalar_in_scalar_out():
    assert isinstance(digamma(3.0), float)


@pytest.mark.parametrize("d", [1, 2, 7])
def test_ball_max_norm(d):
    assert log_unit_ball_volume(d, np.inf) == 0.0


def test_ball_examples():
    assert log_unit_ball_volume(1, 2) == pytest.approx(0.0, abs=1e-15)
    assert log_unit_ball_volume(2, 2) == pytest.approx(np.log(np.pi / 4), abs=1e-14)


@pytest.mark.parametrize("d", [1, 3, 10])
@pytest.mark.parametrize("p", [1, 2])
def test_ball_formula(d, p):
    ref = d * gammaln(1 + 1 / p) - gammaln(1 + d / p)
    assert log_unit_ball_volume(d, p) == pytest.approx(ref, abs=1e-12)
