import mpmath
import numpy as np
import pytest
from scipy import integrate

from umentropy.errors import Diverged
from umentropy.flow import FlowModel, TrainConfig, gaussian_cdf, train


def random_model(d, n_layers=3, hidden=16, seed=0, head_scale=0.3):
    return FlowModel.create(d, n_layers, hidden, rng=np.random.default_rng(seed), head_scale=head_scale)


def fd_jacobian(f, x, h=1e-6):
    d = len(x)
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


# -- Phi -------------------------------------------------------------------

def test_cdf_values():
    assert gaussian_cdf(0.0) == 0.5
    assert gaussian_cdf(1.959964) == pytest.approx(0.975, abs=1e-7)


def test_cdf_against_mpmath():
    ys = np.linspace(-7.5, 7.5, 301)
    ref = np.array([float(mpmath.ncdf(mpmath.mpf(float(y)))) for y in ys])
    assert np.max(np.abs(gaussian_cdf(ys) - ref)) <= 1e-12


def test_cdf_symmetry_and_clamp():
    y = np.linspace(-8, 8, 161)
    assert np.max(np.abs(gaussian_cdf(-y) - (1 - gaussian_cdf(y)))) < 1e-14
    assert gaussian_cdf(-50.0) == 1e-15 and gaussian_cdf(50.0) == 1 - 1e-15
    assert np.all(np.diff(gaussian_cdf(np.linspace(-7, 7, 1000))) > 0)


# -- push / pull -------------------------------------------------------------

def test_identity_model():
    m = FlowModel.identity(3)
    x = np.array([0.3, -1.0, 2.0])
    y, ld = m.push_to_base(x)
    np.testing.assert_array_equal(y, x)
    assert ld == 0.0
    np.testing.assert_array_equal(m.pull_from_base(x), x)


def test_affine_layer():
    m = FlowModel.identity(1)
    m.layers[0].p["bm"][:] = 0.7
    m.layers[0].p["ba"][:] = 0.4
    y, ld = m.push_to_base(np.array([2.0]))
    assert y[0] == pytest.approx((2.0 - 0.7) * np.exp(-0.4))
    assert ld == pytest.approx(-0.4)
    assert m.pull_from_base(y)[0] == pytest.approx(2.0)


def test_log_density_identity():
    assert FlowModel.identity(1).log_density(np.zeros(1)) == pytest.approx(-0.9189385332, abs=1e-9)
    assert FlowModel.identity(2).log_density(np.zeros(2)) == pytest.approx(-1.8378770664, abs=1e-9)


def test_round_trip():
    m = random_model(5, 3)
    x = np.random.default_rng(1).normal(size=(100, 5))
    y, _ = m.push_to_base(x)
    assert np.max(np.abs(m.pull_from_base(y) - x)) < 1e-8


@pytest.mark.parametrize("d", [1, 2, 4])
def test_log_det_matches_finite_difference_jacobian(d):
    m = random_model(d, 3, seed=d)
    for x in np.random.default_rng(d).normal(size=(5, d)):
        _, ld = m.push_to_base(x)
        J = fd_jacobian(lambda v: m.push_to_base(v)[0], x)
        ref = np.log(abs(np.linalg.det(J)))
        assert abs(ld - ref) <= 1e-4 * max(1.0, abs(ref))


def test_log_det_is_sum_of_layers():
    m = random_model(3, 4)
    m.shift[:] = [0.1, -0.2, 0.3]
    m.scale[:] = [2.0, 0.5, 1.5]
    x = np.random.default_rng(2).normal(size=(20, 3))
    _, ld, parts = m.push_to_base(x, per_layer=True)
    assert np.max(np.abs(ld - np.sum(parts, axis=0))) < 1e-10
    assert len(parts) == m.n_layers + 1


def test_density_integrates_to_one():
    m = random_model(1, 3, hidden=8, seed=5, head_scale=0.5)
    val, _ = integrate.quad(lambda t: np.exp(m.log_density(np.array([t]))), -40, 40, limit=400)
    assert val == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("layer", [0, 1, 2])
def test_autoregressive_masks(layer):
    d = 4
    m = random_model(d, 3, seed=9)
    L = m.layers[layer]
    x = np.random.default_rng(0).normal(size=(1, d))
    mu0, a0, _, _ = L.conditioner(x)
    for j in range(d):
        xp = x.copy()
        xp[0, j] += 1.0
        mu1, a1, _, _ = L.conditioner(xp)
        # outputs with degree <= degree(j) must not move
        unaffected = L.degrees <= L.degrees[j]
        np.testing.assert_array_equal(mu1[0, unaffected], mu0[0, unaffected])
        np.testing.assert_array_equal(a1[0, unaffected], a0[0, unaffected])


def test_orderings_alternate():
    m = FlowModel.identity(3, n_layers=3)
    assert [o.tolist() for o in m.orderings] == [[1, 2, 3], [3, 2, 1], [1, 2, 3]]


# -- gradients and training ---------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 3])
def test_gradient_matches_central_differences(d):
    m = random_model(d, 2, hidden=6, seed=d)
    m.shift[:] = 0.1
    m.scale[:] = 1.3
    x = np.random.default_rng(d + 10).normal(size=(10, d))
    _, g = m.nll_and_grad(x)
    free = np.flatnonzero(m.free_parameters())
    h = 1e-6
    fd = np.empty(len(free))
    for n, i in enumerate(free):
        old = m.theta[i]
        m.theta[i] = old + h
        lp = m.nll_and_grad(x)[0]
        m.theta[i] = old - h
        lm = m.nll_and_grad(x)[0]
        m.theta[i] = old
        fd[n] = (lp - lm) / (2 * h)
    rel = np.abs(g[free] - fd) / np.maximum(1e-3, np.abs(fd))
    assert rel.max() < 1e-4
    assert np.all(g[~m.free_parameters()] == 0)


def test_nll_matches_log_density():
    m = random_model(3)
    x = np.random.default_rng(0).normal(size=(30, 3))
    assert m.nll_and_grad(x)[0] == pytest.approx(-np.mean(m.log_density(x)), abs=1e-12)


def test_training_on_base_distribution_stays_near_optimum():
    x = np.random.default_rng(0).normal(size=(1000, 2))
    cfg = TrainConfig(n_layers=2, hidden_width=16, epochs=20, standardize=False)
    m = train(x, cfg, init=FlowModel.identity(2, n_layers=2, hidden=16))
    initial = FlowModel.identity(2).nll(x)
    assert abs(m.nll(x) - initial) <= 0.02 * abs(initial)


def test_small_lr_training_mostly_decreases():
    x = np.random.default_rng(1).gamma(2.0, size=(64, 2))
    cfg = TrainConfig(n_layers=2, hidden_width=8, epochs=50, batch_size=64, learning_rate=1e-4,
                      patience=1000, val_fraction=0.1)
    m = train(x, cfg)
    hist = np.array(m.history["train"])
    ok = np.diff(hist) <= 1e-6
    assert ok.mean() >= 0.9


def test_training_is_deterministic():
    x = np.random.default_rng(2).normal(size=(300, 2)) ** 2
    cfg = TrainConfig(n_layers=2, hidden_width=8, epochs=5, seed=3)
    a, b = train(x, cfg), train(x, cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.shift, b.shift)


def test_training_improves_skewed_data():
    x = np.random.default_rng(3).lognormal(size=(1000, 2))
    m = train(x, TrainConfig(n_layers=3, hidden_width=16, epochs=60, seed=0))
    assert m.history["val"][-1] < m.history["initial"]


def test_divergence_is_reported():
    x = np.random.default_rng(0).normal(size=(100, 2)) * 1e200
    with pytest.raises(Diverged):
        train(x, TrainConfig(n_layers=1, hidden_width=4, epochs=2, standardize=False))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)


# -- serialization -----------------------------------------------------------

def test_json_round_trip_is_exact():
    m = random_model(3, 2)
    m.shift[:] = [0.1, 0.2, 0.3]
    back = FlowModel.loads(m.dumps())
    np.testing.assert_array_equal(back.theta, m.theta)
    x = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_array_equal(back.push_to_base(x)[0], m.push_to_base(x)[0])


def test_from_dict_rejects_other_documents():
    with pytest.raises(ValueError):
        FlowModel.from_dict({"format": "something-else"})


def test_copy_is_independent():
    m = random_model(2)
    c = m.copy()
    c.theta[:] = 0
    assert np.any(m.theta != 0)
    np.testing.assert_array_equal(c.push_to_base(np.ones(2))[0], (np.ones(2) - c.shift) / c.scale)
