"""Command-line entry point: ``umentropy {estimate,bench,rate,oed}``.

Settings are resolved in three layers: built-in defaults, then a JSON
``--config`` file, then explicit flags. Exit codes: 0 on success, 2 for a
configuration error, 3 for a numerical failure (partial results are kept).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields

from .bench import EXPERIMENTS, BenchmarkConfig, ConfigError, load_manifest, run_benchmark
from .errors import EntropyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("umentropy")


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _kv(text):
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _common(p):
    # default=SUPPRESS keeps unset flags out of the namespace, so they
    # cannot override values from the config file.
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with BenchmarkConfig fields")
    p.add_argument("--estimators", type=_names, default=S, help="comma-separated, e.g. KL,tKL,UM-tKSG")
    p.add_argument("-k", "--k", type=int, default=S, help="neighbor order")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--seed", type=int, default=S, help="base seed; trial t uses seed + t")
    p.add_argument("-o", "--output", default=S, help="output directory")
    p.add_argument("--threads", type=int, default=S,
                   help="worker processes (default: $UMENTROPY_THREADS or 1)")
    p.add_argument("--flow", type=_kv, action="append", default=S, metavar="KEY=VALUE",
                   help="flow training option, e.g. n_layers=10 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="umentropy",
                                     description="k-NN and uniformizing-flow entropy estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the entropy of a sample file (CSV or .npy)")
    p.add_argument("input", help="sample file; CSV with an x1..xd header or .npy")
    p.add_argument("--estimator", default="tKL")
    p.add_argument("-k", "--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identity-flow", action="store_true",
                   help="use the identity flow instead of training one (UM/NF)")
    p.add_argument("--flow", type=_kv, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("bench", help="repeated estimates on benchmark distributions")
    _common(p)
    p.add_argument("--experiment", choices=EXPERIMENTS, default=S)
    p.add_argument("--family", default=S, help="distribution family")
    p.add_argument("--param", type=_kv, action="append", default=S, metavar="KEY=VALUE",
                   help="family parameter, e.g. b=2 (repeatable)")
    p.add_argument("--dims", type=_ints, default=S, help="comma-separated dimensions")
    p.add_argument("--n", type=_ints, default=S, help="comma-separated sample sizes")
    p.add_argument("--input", default=S, help="sample file for single-estimate")
    p.add_argument("--identity-flow", dest="identity_flow", action="store_true", default=S)
    p.add_argument("--manifest", help="rerun the configuration stored in a manifest")

    p = sub.add_parser("rate", help="entropy rate of a simulated autoregressive process")
    _common(p)
    p.add_argument("--model", default=S, help="ar3, ar7 or ar15")
    p.add_argument("--T", type=int, default=S, help="trajectory length")
    p.add_argument("--burn-in", dest="burn_in", type=int, default=S)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=S)

    p = sub.add_parser("oed", help="maximum entropy sampling design for Lotka-Volterra")
    _common(p)
    p.add_argument("--n", type=_ints, default=S, help="samples per design point")
    p.add_argument("--grid", type=_ints, default=S, help="grid sizes, e.g. 8,8")
    p.add_argument("--grid-range", dest="grid_range", type=lambda t: [float(v) for v in t.split(",")],
                   default=S, help="lo,hi for alpha and beta")
    p.add_argument("--design-d", dest="design_d", type=int, default=S)
    p.add_argument("--nmc-m", dest="nmc_m", type=int, default=S)
    p.add_argument("--nmc-n", dest="nmc_n", type=int, default=S)
    p.add_argument("--lv", type=_kv, action="append", default=S, metavar="KEY=VALUE",
                   help="Lotka-Volterra option, e.g. noise_var=0.01 (repeatable)")
    return parser


_DEFAULTS = {
    "rate": {"experiment": "entropy-rate", "estimators": ["UM-tKSG"], "flow": {}},
    "oed": {"experiment": "oed", "estimators": ["UM-tKSG"], "n": [2000]},
}


def resolve_config(command: str, args: argparse.Namespace) -> BenchmarkConfig:
    """Defaults, then the config file (or manifest), then flags."""
    doc = dict(_DEFAULTS.get(command, {}))
    manifest = getattr(args, "manifest", None)
    if manifest:
        doc.update(asdict(load_manifest(manifest)))
    if args.config:
        try:
            with open(args.config) as fh:
                doc.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    known = {f.name for f in fields(BenchmarkConfig)}
    for key, value in vars(args).items():
        if key in ("command", "config", "manifest", "verbose"):
            continue
        if key in ("flow", "param", "lv"):
            target = "params" if key == "param" else key
            doc[target] = {**doc.get(target, {}), **dict(value)}
        elif key in known:
            doc[key] = value
    if command in _DEFAULTS:
        doc["experiment"] = _DEFAULTS[command]["experiment"]
    try:
        return BenchmarkConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_estimate(args) -> int:
    from .api import parse_estimator, run_estimator
    from .flow import FlowModel, TrainConfig
    from .samples import load

    try:
        data = load(args.input)
        flow = TrainConfig(**dict(args.flow))
        est = parse_estimator(args.estimator, args.k, flow, args.seed)
    except (OSError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    model = FlowModel.identity(data.d) if args.identity_flow else None
    try:
        report = run_estimator(data, est, args.seed, model)
    except (EntropyError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(report.to_dict(), default=str))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "estimate":
        return _cmd_estimate(args)
    try:
        cfg = resolve_config(args.command, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run_benchmark(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EntropyError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure (partial results in {cfg.output}): {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    if "results" in manifest:
        print(json.dumps(manifest["results"], indent=2))
    else:
        print(f"wrote {cfg.output}/trials.csv, summary.csv, manifest.json")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
