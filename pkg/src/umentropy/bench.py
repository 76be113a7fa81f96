"""Benchmark harness: repeated estimates against known entropies.

Each run writes into one output directory:

* ``trials.csv``: one row per (estimator, sweep point, trial), columns
  ``experiment, estimator, d, n, k, trial, seed, estimate, truth, error``;
* ``summary.csv``: bias, standard deviation and RMSE per (estimator, d, n);
* ``manifest.json``: the resolved configuration, library versions, wall
  times and the run status. Passing the manifest back (``--manifest``)
  repeats the run with the same seeds and reproduces every trial value.

Trial ``t`` uses seed ``seed + t`` both for the data and for any flow
training, so all estimators in a trial see the same sample.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import distributions, oed, timeseries
from .api import ESTIMATOR_NAMES, parse_estimator, run_estimator
from .flow import FlowModel, TrainConfig
from .samples import load

log = logging.getLogger(__name__)

EXPERIMENTS = ("beta-sweep", "gaussian-sweep", "rosenbrock-sweep", "entropy-rate", "oed",
               "single-estimate")
TRIAL_COLUMNS = ("experiment", "estimator", "d", "n", "k", "trial", "seed", "estimate", "truth", "error")
SUMMARY_COLUMNS = ("experiment", "estimator", "d", "n", "k", "trials", "truth", "mean", "bias",
                   "std", "rmse")
THREADS_ENV = "UMENTROPY_THREADS"

_DEFAULT_FAMILY = {"beta-sweep": "beta", "gaussian-sweep": "normal",
                   "rosenbrock-sweep": "hybrid-rosenbrock"}


class ConfigError(ValueError):
    """The benchmark configuration is invalid."""


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, value)


@dataclass
class BenchmarkConfig:
    """Everything a run needs; unused fields are ignored by an experiment."""

    experiment: str = "single-estimate"
    family: str | None = None
    params: dict = field(default_factory=dict)
    estimators: list = field(default_factory=lambda: ["tKL"])
    dims: list = field(default_factory=lambda: [1])
    n: list = field(default_factory=lambda: [1000])
    k: int = 1
    trials: int = 1
    seed: int = 0
    output: str = "results"
    input: str | None = None
    flow: dict = field(default_factory=dict)
    identity_flow: bool | None = None
    threads: int | None = None
    # entropy-rate
    model: str = "ar3"
    T: int = 10000
    burn_in: int = 1000
    noise_sigma: float = 0.03
    # oed
    grid: list = field(default_factory=lambda: [8, 8])
    grid_range: list = field(default_factory=lambda: [0.3, 5.0])
    design_d: int = 5
    nmc_m: int = 2000
    nmc_n: int = 2000
    lv: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}")
        for name in ("dims", "n"):
            vals = getattr(self, name)
            if not vals or any(int(v) != v or v < 1 for v in vals):
                raise ConfigError(f"{name} must be a non-empty list of positive integers")
        if self.family is not None and self.family not in distributions.FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.experiment == "single-estimate" and self.input is None and self.family is None:
            raise ConfigError("single-estimate needs an input file or a family")
        if self.experiment == "oed":
            if len(self.grid) != 2 or min(self.grid) < 1:
                raise ConfigError("grid must be two positive sizes")
            if len(self.grid_range) != 2 or not 0 < self.grid_range[0] <= self.grid_range[1]:
                raise ConfigError("grid_range must be 0 < lo <= hi")
        try:
            self.train_config()
            self.lv_config()
            if self.experiment == "entropy-rate":
                timeseries.ArModel.preset(self.model, self.noise_sigma)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def resolved_family(self):
        return self.family or _DEFAULT_FAMILY.get(self.experiment)

    def train_config(self) -> TrainConfig:
        doc = dict(self.flow)
        if "n_layers" not in doc and self.resolved_family() in ("hybrid-rosenbrock",
                                                                "hybrid-rosenbrock-uniform"):
            doc["n_layers"] = 10
        return TrainConfig(**doc)

    def lv_config(self) -> oed.LvConfig:
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in self.lv.items()}
        return oed.LvConfig(**doc)

    def use_identity_flow(self) -> bool:
        if self.identity_flow is None:
            return self.experiment == "gaussian-sweep"
        return bool(self.identity_flow)


def _spec_for(cfg: BenchmarkConfig, d: int):
    family = cfg.resolved_family()
    params = dict(cfg.params)
    if family in ("hybrid-rosenbrock", "hybrid-rosenbrock-uniform"):
        n1 = params.get("n1", 4)
        if (d - 1) % (n1 - 1):
            raise ConfigError(f"hybrid Rosenbrock with n1={n1} cannot have d={d}")
        params.setdefault("n2", (d - 1) // (n1 - 1))
    else:
        params["d"] = d
    try:
        return distributions.make(family, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from None


# -- workers ------------------------------------------------------------
# Jobs are plain tuples so they can cross a process boundary.

def _estimate_job(job):
    cfg_doc, name, d, n, seed = job
    cfg = BenchmarkConfig.from_dict(cfg_doc)
    if cfg.input is not None:
        data = load(cfg.input)
        truth = float("nan")
    else:
        spec = _spec_for(cfg, d)
        data = distributions.sample(spec, n, seed)
        truth = distributions.analytic_entropy(spec)
    est = parse_estimator(name, cfg.k, cfg.train_config(), seed)
    model = None
    if name.startswith("UM") or name == "NF":
        if cfg.use_identity_flow():
            model = FlowModel.identity(data.d)
    t0 = time.perf_counter()
    value = run_estimator(data, est, seed, model).value
    return value, truth, time.perf_counter() - t0


def _rate_job(job):
    cfg_doc, name, _, n, seed = job
    cfg = BenchmarkConfig.from_dict(cfg_doc)
    model = timeseries.ArModel.preset(cfg.model, cfg.noise_sigma)
    traj = timeseries.simulate_ar(model, n, cfg.burn_in, seed)
    est = parse_estimator(name, cfg.k, cfg.train_config(), seed)
    t0 = time.perf_counter()
    value = timeseries.entropy_rate(traj, model.order, est).value
    return value, timeseries.true_gaussian_rate(cfg.noise_sigma), time.perf_counter() - t0


def _versions():
    from . import __version__
    return {"umentropy": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class _Writer:
    """Appends trial rows and flushes after each one."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.w = csv.writer(self.fh)
        self.w.writerow(TRIAL_COLUMNS)
        self.fh.flush()
        self.rows = []

    def add(self, row):
        self.rows.append(row)
        self.w.writerow([_fmt(row[c]) for c in TRIAL_COLUMNS])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def summarize(rows):
    """Aggregate trial rows per (experiment, estimator, d, n, k)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["estimator"], r["d"], r["n"], r["k"]), []).append(r)
    out = []
    for key, rs in groups.items():
        est = np.array([r["estimate"] for r in rs])
        truth = rs[0]["truth"]
        err = est - truth
        out.append(dict(zip(SUMMARY_COLUMNS, (*key, len(rs), truth, float(est.mean()),
                                               float(err.mean()),
                                               float(est.std(ddof=1)) if len(rs) > 1 else 0.0,
                                               float(np.sqrt(np.mean(err ** 2)))))))
    return out


def _write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in summarize(rows):
            w.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])


def _jobs(cfg: BenchmarkConfig):
    doc = asdict(cfg)
    if cfg.experiment == "entropy-rate":
        order = timeseries.ArModel.preset(cfg.model).order
        for name in cfg.estimators:
            for T in (cfg.T,):
                for t in range(cfg.trials):
                    yield (doc, name, order, T, cfg.seed + t), t, _rate_job
        return
    dims, sizes = cfg.dims, cfg.n
    if cfg.input is not None:
        data = load(cfg.input)
        dims, sizes = [data.d], [data.n]
    for name in cfg.estimators:
        for d in dims:
            for n in sizes:
                for t in range(cfg.trials):
                    yield (doc, name, d, n, cfg.seed + t), t, _estimate_job


def run_benchmark(cfg: BenchmarkConfig) -> dict:
    """Run an experiment and write its reports; returns the manifest.

    Trial rows are flushed as they complete. If an estimate fails, the
    summary and a manifest with ``status = "failed"`` are still written and
    the exception is re-raised.
    """
    cfg.validate()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    threads = cfg.threads or default_threads()
    manifest = {"config": asdict(cfg), "versions": _versions(), "rng": distributions.RNG_NAME,
                "threads": threads, "status": "running", "outputs": {}}
    t_start = time.perf_counter()
    try:
        if cfg.experiment == "oed":
            manifest["results"] = _run_oed(cfg, out, manifest)
        else:
            _run_trials(cfg, out, threads, manifest)
        manifest["status"] = "ok"
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest["wall_time"] = time.perf_counter() - t_start
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, default=_json_default)
    return manifest


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _run_trials(cfg, out, threads, manifest):
    writer = _Writer(out / "trials.csv")
    manifest["outputs"] = {"trials": "trials.csv", "summary": "summary.csv"}
    wall = {}
    jobs = list(_jobs(cfg))
    try:
        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(fn, job) for job, _, fn in jobs]
                results = (f.result() for f in futures)
                _collect(cfg, jobs, results, writer, wall)
        else:
            _collect(cfg, jobs, (fn(job) for job, _, fn in jobs), writer, wall)
    finally:
        writer.close()
        _write_summary(out / "summary.csv", writer.rows)
        manifest["estimator_wall_time"] = wall


def _collect(cfg, jobs, results, writer, wall):
    # Results are consumed in job order, so the CSV order is fixed.
    for (job, trial, _), (value, truth, secs) in zip(jobs, results):
        _, name, d, n, seed = job
        wall[name] = wall.get(name, 0.0) + secs
        writer.add({"experiment": cfg.experiment, "estimator": name, "d": d, "n": n, "k": cfg.k,
                    "trial": trial, "seed": seed, "estimate": float(value), "truth": float(truth),
                    "error": float(value - truth)})


def _run_oed(cfg, out, manifest):
    lv = cfg.lv_config()
    lo, hi = cfg.grid_range
    grid = oed.default_grid(cfg.grid[0], cfg.grid[1], lo, hi)
    name = cfg.estimators[0]
    est = parse_estimator(name, cfg.k, cfg.train_config(), cfg.seed)
    t0 = time.perf_counter()
    result = oed.mes_search(grid, lv, cfg.n[0], est, cfg.design_d, cfg.seed, repeats=cfg.trials)
    search_time = time.perf_counter() - t0
    result.write_table(out / "utility.csv")
    oed.write_schedule(result.best, out / "schedule.json")
    nmc = oed.NmcConfig(cfg.nmc_m, cfg.nmc_n, cfg.seed)
    equi = oed.beta_schedule(1.0, 1.0, cfg.design_d, lv.t_end)
    ref_best = oed.nmc_entropy(result.best, lv, nmc)
    ref_equi = oed.nmc_entropy(equi, lv, nmc)
    manifest["outputs"] = {"utility": "utility.csv", "schedule": "schedule.json"}
    return {"estimator": name, "best": result.best.to_dict(), "nmc_best": ref_best,
            "equidistant": equi.to_dict(), "nmc_equidistant": ref_equi,
            "search_wall_time": search_time}


def load_manifest(path) -> BenchmarkConfig:
    with open(path) as fh:
        doc = json.load(fh)
    if "config" not in doc:
        raise ConfigError(f"{path} is not a run manifest")
    return BenchmarkConfig.from_dict(doc["config"])
