"""Acceptance criteria, each at its stated size and tolerance.

Every test prints one line ``ACCEPTANCE <n> PASS|FAIL: <summary>`` to the
terminal (also under output capture), then asserts. Running the whole file
takes about ten minutes on one core; the flow-based criteria
(7, 8 and 10) dominate.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from umentropy import distributions as D
from umentropy.api import parse_estimator, run_estimator
from umentropy.estimators import EstimatorConfig, estimate, kl_estimate, tkl_estimate
from umentropy.flow import FlowModel, TrainConfig
from umentropy.knn import knn_radii, truncated_lengths
from umentropy.oed import (LvConfig, NmcConfig, beta_schedule, default_grid, mes_search,
                           nested_mc_entropy, nmc_entropy)
from umentropy.special import digamma
from umentropy.timeseries import ArModel, entropy_rate, simulate_ar, true_gaussian_rate
from umentropy.uniformize import UmConfig, um_estimate


@pytest.fixture
def report(capsys):
    def _report(number, ok, summary):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {summary}")
        return ok
    return _report


def rmse(values, truth):
    return float(np.sqrt(np.mean((np.asarray(values) - truth) ** 2)))


def test_01_uniform_unbiasedness(report):
    vals = np.array([tkl_estimate(D.sample(D.SymBeta(5, 1.0), 1000, seed=s)).value
                     for s in range(200)])
    se = vals.std(ddof=1) / np.sqrt(200)
    ok = abs(vals.mean()) <= 3 * se
    report(1, ok, f"tKL on U[0,1]^5: mean {vals.mean():+.4f}, 3 SE = {3 * se:.4f}")
    assert ok


def test_02_truncation_wins(report):
    spec = D.SymBeta(20, 2.0)
    truth = D.analytic_entropy(spec)
    est = {k: [] for k in ("KL", "tKL", "KSG", "tKSG")}
    for s in range(50):
        x = D.sample(spec, 1000, seed=s)
        for k in est:
            est[k].append(estimate(x, EstimatorConfig(k)).value)
    r = {k: rmse(v, truth) for k, v in est.items()}
    ok = r["tKL"] < r["KL"] and r["tKSG"] < r["KSG"]
    report(2, ok, "SymBeta(2) d=20 RMSE: " + ", ".join(f"{k} {v:.3f}" for k, v in r.items()))
    assert ok


def test_03_gaussian_uniformization(report):
    d = 10
    truth = D.analytic_entropy(D.StdNormal(d))
    identity = FlowModel.identity(d)
    est = {k: [] for k in ("KL", "KSG", "UM-tKL", "UM-tKSG")}
    for s in range(50):
        x = D.sample(D.StdNormal(d), 1000, seed=s)
        est["KL"].append(estimate(x, EstimatorConfig("KL")).value)
        est["KSG"].append(estimate(x, EstimatorConfig("KSG")).value)
        est["UM-tKL"].append(um_estimate(x, UmConfig("tKL"), model=identity).value)
        est["UM-tKSG"].append(um_estimate(x, UmConfig("tKSG"), model=identity).value)
    r = {k: rmse(v, truth) for k, v in est.items()}
    um = np.array(est["UM-tKL"])
    se = um.std(ddof=1) / np.sqrt(len(um))
    close = abs(um.mean() - 14.1894) <= 3 * se
    ok = r["UM-tKL"] < r["KL"] and r["UM-tKSG"] < r["KSG"] and close
    report(3, ok, "N(0,I_10) RMSE: " + ", ".join(f"{k} {v:.3f}" for k, v in r.items())
           + f"; UM-tKL mean {um.mean():.4f} vs 14.1894 (3 SE = {3 * se:.4f})")
    assert ok


def test_04_worked_examples(report):
    a = tkl_estimate([[0.0], [0.5], [1.0]]).value
    b = um_estimate([[-1.0], [0.0], [1.0]], UmConfig("tKL"), model=FlowModel.identity(1)).value
    ok = abs(a - 1.0379) <= 1e-4 and abs(b - 2.1630) <= 1e-3
    report(4, ok, f"tKL {{0,0.5,1}} = {a:.6f} (1.0379); frozen-identity UM {{-1,0,1}} = {b:.6f} (2.1630)")
    assert ok


def test_05_lemma1_simulation(report):
    rng = np.random.default_rng(12345)
    lines, ok = [], True
    for k in (1, 3):
        means = np.empty(5000)
        for r in range(5000):
            x = rng.random((100, 1))
            xi = truncated_lengths(x, knn_radii(x, k)[:, None] / 2)
            means[r] = np.log(xi).mean()
        target = digamma(k) - digamma(100)
        se = means.std(ddof=1) / np.sqrt(len(means))
        good = abs(means.mean() - target) <= 4 * se
        ok &= good
        lines.append(f"k={k}: {means.mean():.5f} vs {target:.5f} (4 SE = {4 * se:.5f})")
    report(5, ok, "mean log xi on U[0,1], N=100: " + "; ".join(lines))
    assert ok


def test_06_flow_correctness(report):
    # round trip, d=5, three random layers
    m = FlowModel.create(5, 3, 32, rng=np.random.default_rng(0), head_scale=0.3)
    x = np.random.default_rng(1).normal(size=(100, 5))
    trip = float(np.max(np.abs(m.pull_from_base(m.push_to_base(x)[0]) - x)))

    # parameter gradients vs central differences, d=3, 10 points
    g_model = FlowModel.create(3, 2, 8, rng=np.random.default_rng(2), head_scale=0.3)
    xb = np.random.default_rng(3).normal(size=(10, 3))
    _, grad = g_model.nll_and_grad(xb)
    free = np.flatnonzero(g_model.free_parameters())
    fd = np.empty(len(free))
    for n, i in enumerate(free):
        old = g_model.theta[i]
        g_model.theta[i] = old + 1e-6
        up = g_model.nll_and_grad(xb)[0]
        g_model.theta[i] = old - 1e-6
        down = g_model.nll_and_grad(xb)[0]
        g_model.theta[i] = old
        fd[n] = (up - down) / 2e-6
    grad_err = float(np.max(np.abs(grad[free] - fd) / np.maximum(1e-3, np.abs(fd))))

    # composed log-det vs finite-difference Jacobian, d=4
    j_model = FlowModel.create(4, 3, 16, rng=np.random.default_rng(4), head_scale=0.3)
    ld_err = 0.0
    for p in np.random.default_rng(5).normal(size=(5, 4)):
        _, ld = j_model.push_to_base(p)
        J = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1e-6
            J[:, j] = (j_model.push_to_base(p + e)[0] - j_model.push_to_base(p - e)[0]) / 2e-6
        ref = np.log(abs(np.linalg.det(J)))
        ld_err = max(ld_err, abs(ld - ref) / max(1.0, abs(ref)))

    ok = trip < 1e-8 and grad_err < 1e-4 and ld_err < 1e-4
    report(6, ok, f"round trip {trip:.1e}; gradient rel err {grad_err:.1e}; log-det rel err {ld_err:.1e}")
    assert ok


def test_07_rosenbrock_end_to_end(report):
    spec = D.HybridRosenbrock(n1=4, n2=1, a=1.0, b=0.1, mu=1.0)
    truth = D.analytic_entropy(spec)
    mc, mc_se = D.mc_entropy(spec, 1_000_000, seed=2024)
    cross = abs(mc - truth) <= 4 * mc_se
    t0 = time.perf_counter()
    um_cfg = UmConfig("tKSG", flow=TrainConfig(n_layers=10))
    um, kl = [], []
    for s in range(10):
        x = D.sample(spec, 2000, seed=s)
        um.append(run_estimator(x, um_cfg, seed=s).value)
        kl.append(kl_estimate(x).value)
    r_um, r_kl = rmse(um, truth), rmse(kl, truth)
    minutes = (time.perf_counter() - t0) / 60
    ok = cross and r_um < r_kl and minutes < 10
    report(7, ok, f"HR d=4: truth {truth:.4f} (MC {mc:.4f} +- {mc_se:.4f}); "
           f"RMSE UM-tKSG {r_um:.3f} vs KL {r_kl:.3f}; {minutes:.1f} min")
    assert ok


def test_08_entropy_rate(report):
    truth = true_gaussian_rate(0.03)
    model = ArModel.preset("ar3")
    cfg = parse_estimator("UM-tKSG")
    vals = []
    for s in range(10):
        traj = simulate_ar(model, 10_000, seed=s)
        vals.append(entropy_rate(traj, 3, replace(cfg, seed=s)).value)
    errs = np.abs(np.array(vals) - truth)
    ok = bool(np.all(errs <= 0.15))
    report(8, ok, f"AR(3) UM-tKSG rate: mean {np.mean(vals):.4f} vs {truth:.4f}, "
           f"max |err| {errs.max():.4f} (limit 0.15), RMSE {rmse(vals, truth):.4f}")
    assert ok


def _conjugate(m, n, seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(m, 1))
    y = theta + rng.normal(size=(m, 1))
    return nested_mc_entropy(y, rng.normal(size=(n, 1)), 1.0)


def test_09_nmc_oracle(report):
    truth = 0.5 * np.log(2 * np.pi * np.e * 2)
    val = _conjugate(2000, 2000, 0)
    biased = np.mean([_conjugate(2000, 10, s) for s in range(1, 51)])
    ok = abs(val - truth) <= 0.05 and biased > truth
    report(9, ok, f"conjugate toy: NMC {val:.4f} vs {truth:.4f}; mean at N_inner=10 {biased:.4f} > truth")
    assert ok


def test_10_oed_ranking(report):
    lv = LvConfig()
    t0 = time.perf_counter()
    res = mes_search(default_grid(), lv, 2000, parse_estimator("UM-tKSG"), seed=0)
    nmc = NmcConfig(2000, 2000, seed=1)
    best = nmc_entropy(res.best, lv, nmc)
    equi = nmc_entropy(beta_schedule(1.0, 1.0, 5, lv.t_end), lv, nmc)
    minutes = (time.perf_counter() - t0) / 60
    ok = best > equi and minutes < 20
    report(10, ok, f"MES design (alpha={res.best.alpha:.3f}, beta={res.best.beta:.3f}) NMC {best:.3f} "
           f"vs equidistant {equi:.3f}; {minutes:.1f} min")
    assert ok


def test_11_variance_decay(report):
    spec = D.SymBeta(3, 1.0)
    small = [tkl_estimate(D.sample(spec, 1000, seed=s)).value for s in range(200)]
    large = [tkl_estimate(D.sample(spec, 4000, seed=10_000 + s)).value for s in range(200)]
    ratio = np.std(small, ddof=1) / np.std(large, ddof=1)
    ok = 1.4 <= ratio <= 2.8
    report(11, ok, f"std(N=1000)/std(N=4000) on U[0,1]^3 = {ratio:.3f} (band [1.4, 2.8])")
    assert ok
