"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 configuration/schema, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from .analysis import (
    DropoutPattern,
    build_Cn,
    build_Ob,
    classify_hamiltonian,
    sufficient_conditions,
    estimate_expected_log_lipschitz,
    product_membership,
    rank_full,
)
from .channel import all_sequences, channel_from_dict, log_sequence_probability
from .errors import ConfigError, DomainError, NumericError, RseioError, UnsupportedConfigError
from .pcm import HamiltonianBlock, build_phi
from .plant import plant_from_dict
from .presets import PRESETS, preset_dict
from .sim import SimConfig, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4
MAX_PROBE_N = 12
EXCLUSION_QUOTA = 0.01

log = logging.getLogger("rseio")


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_hash(spec: dict) -> str:
    blob = json.dumps(spec, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _load_spec(args) -> dict:
    """Resolve ``--preset`` and ``--config`` into one JSON object (config wins)."""
    spec = {}
    if args.preset:
        try:
            spec = preset_dict(args.preset)
        except ConfigError as exc:
            raise CliFailure(EXIT_USAGE, str(exc)) from None
    if args.config:
        if not os.path.isfile(args.config):
            raise CliFailure(EXIT_USAGE, f"config file not found: {args.config}")
        with open(args.config) as fh:
            text = fh.read()
        if not text.strip():
            raise CliFailure(EXIT_USAGE, "config file is empty")
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliFailure(EXIT_CONFIG, f"config is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise CliFailure(EXIT_CONFIG, "config must be a JSON object")
        if not loaded and not spec:
            raise CliFailure(EXIT_USAGE, "config is empty; give a preset or fill in the config")
        spec.update(loaded)
    if not spec:
        raise CliFailure(EXIT_USAGE, "nothing to do: pass --preset NAME or --config PATH")
    return spec


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    if not os.access(args.out, os.W_OK):
        raise CliFailure(EXIT_USAGE, f"output directory not writable: {args.out}")
    return args.out


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _plant_with_mu(spec: dict):
    plant = plant_from_dict(spec.get("plant", "benchmark"))
    mu = spec.get("mu")
    return plant if mu is None else plant.with_mu(float(mu))


# -- subcommands --------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = _load_spec(args)
    for key, value in (("seed", args.seed), ("trials", args.trials)):
        if value is not None:
            spec[key] = value
    config = SimConfig.from_dict(spec)
    out = _out_dir(args)
    report = run_experiment(config, threads=args.threads)
    paths = report.write(out)
    for p in paths:
        log.info("wrote %s", p)
    excluded = report.excluded_trials + sum(report.pcm_excluded.values())
    if report.excluded_trials > EXCLUSION_QUOTA * config.trials:
        raise CliFailure(EXIT_NUMERIC, f"{report.excluded_trials} of {config.trials} trials failed "
                                       f"(quota {EXCLUSION_QUOTA:.0%})")
    if excluded:
        log.warning("%d trial(s) excluded; see report.json", excluded)
    return EXIT_OK


_ANALYZE_KEYS = {"plant", "mu", "channel", "n_steps", "sequence_samples", "pair_samples",
                 "sweep_length", "seed"}


def cmd_analyze(args) -> int:
    spec = _load_spec(args)
    if args.seed is not None:
        spec["seed"] = args.seed
    spec = {k: v for k, v in spec.items() if k in _ANALYZE_KEYS}
    spec.setdefault("channel", {"kind": "bernoulli", "gamma": 0.8})
    spec.setdefault("n_steps", 12)
    spec.setdefault("sequence_samples", 200)
    spec.setdefault("pair_samples", 200)
    spec.setdefault("sweep_length", 6)
    spec.setdefault("seed", 0)
    model = _plant_with_mu(spec)
    if not model.is_lti:
        raise UnsupportedConfigError("analysis supports time-invariant plants only; "
                                     "the configured plant has tabulated or functional schedules")
    channel = channel_from_dict(spec["channel"])
    report = {"config_hash": _config_hash(spec), "seed": spec["seed"], "config": spec}
    report["sufficient_conditions"] = sufficient_conditions(model).as_dict()

    length = int(spec["sweep_length"])
    if not 1 <= length <= MAX_PROBE_N:
        raise ConfigError(f"sweep_length must lie in [1, {MAX_PROBE_N}]")
    phi = {0: build_phi(model, 0, 0), 1: build_phi(model, 0, 1)}
    counts = {"in_hl": 0, "in_hr": 0, "in_hlr": 0}
    prob_hlr = 0.0
    rank_agree = 0
    for seq in all_sequences(length):
        cls = product_membership([phi[g] for g in seq.bits])
        pattern = DropoutPattern.from_gammas(seq.bits)
        ob_full = rank_full(build_Ob(model, pattern), "column")
        cn_full = rank_full(build_Cn(model, pattern), "row")
        rank_agree += (ob_full == cls.in_hl) and (cn_full == cls.in_hr)
        for key in counts:
            counts[key] += getattr(cls, key)
        if cls.in_hlr:
            prob_hlr += math.exp(log_sequence_probability(channel, seq))
    report["membership_sweep"] = {
        "length": length, "patterns": 2 ** length, **counts,
        "probability_hlr": prob_hlr, "rank_test_agreement": rank_agree,
    }
    est = estimate_expected_log_lipschitz(model, channel, int(spec["n_steps"]),
                                          int(spec["sequence_samples"]), int(spec["pair_samples"]),
                                          rng_seed=int(spec["seed"]))
    report["log_lipschitz"] = est.as_dict()
    path = os.path.join(_out_dir(args), "analysis.json")
    _write_json(path, report)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_classify(args) -> int:
    spec = _load_spec(args)
    gammas = spec.get("gammas", [1])
    if args.gammas is not None:
        gammas = [int(g) for g in args.gammas.split(",") if g.strip()]
    if not gammas or any(g not in (0, 1) for g in gammas):
        raise ConfigError("gammas must be a nonempty list of 0/1 values")
    model = _plant_with_mu(spec)
    phis = [build_phi(model, t, g) for t, g in enumerate(gammas)]
    steps = []
    for t, (g, ph) in enumerate(zip(gammas, phis)):
        steps.append({"t": t, "gamma": g, "symplectic_residual": ph.symplectic_residual(),
                      **classify_hamiltonian(ph).as_dict()})
    # time order t = 1..N corresponds to the product Phi_N ... Phi_1
    acc = np.eye(2 * model.n)
    for ph in phis:
        acc = ph.matrix @ acc
    product = HamiltonianBlock(acc)
    report = {
        "config_hash": _config_hash({"plant": spec.get("plant", "benchmark"), "mu": spec.get("mu"),
                                     "gammas": gammas}),
        "seed": None,
        "gammas": gammas,
        "steps": steps,
        "product_explicit": classify_hamiltonian(product).as_dict(),
        "product_criteria": product_membership(phis[::-1]).as_dict(),
        "product_symplectic_residual": product.symplectic_residual(),
    }
    path = os.path.join(_out_dir(args), "classify.json")
    _write_json(path, report)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_probe_channel(args) -> int:
    spec = _load_spec(args)
    n = spec.get("N", spec.get("n"))
    if args.n is not None:
        n = args.n
    if n is None:
        raise CliFailure(EXIT_USAGE, "sequence length N missing (config key 'N' or --n)")
    n = int(n)
    if n < 1:
        raise ConfigError("N must be >= 1")
    if n > MAX_PROBE_N:
        raise CliFailure(EXIT_USAGE, f"refusing to enumerate 2^{n} sequences (limit N <= {MAX_PROBE_N})")
    channel = channel_from_dict(spec.get("channel"))
    header = f"config_hash={_config_hash({'channel': spec.get('channel'), 'N': n})} seed=none"
    path = os.path.join(_out_dir(args), "channel_probe.csv")
    total = 0.0
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        wr = csv.writer(fh)
        wr.writerow(["m", "bits", "log_prob", "prob"])
        for seq in all_sequences(n):
            lp = log_sequence_probability(channel, seq)
            prob = math.exp(lp)
            total += prob
            wr.writerow([seq.index, "".join(map(str, seq.bits)), repr(lp), repr(prob)])
        wr.writerow(["total", "", "", repr(total)])
    log.info("wrote %s", path)
    print(f"normalization: {total!r}")
    if abs(total - 1.0) > 1e-10:
        raise CliFailure(EXIT_NUMERIC, f"probabilities sum to {total!r}, not 1")
    return EXIT_OK


# -- entry point ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rseio", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--preset", metavar="NAME", help=f"built-in preset ({', '.join(sorted(PRESETS))})")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimator comparison")
    sim.add_argument("--trials", type=int, metavar="N", help="trial count override")
    sim.add_argument("--threads", type=int, metavar="N", default=os.cpu_count() or 1,
                     help="worker processes (default: available cores)")
    sim.set_defaults(func=cmd_simulate)
    ana = sub.add_parser("analyze", parents=[common], help="convergence diagnostics report")
    ana.set_defaults(func=cmd_analyze)
    cls = sub.add_parser("classify", parents=[common], help="classify step matrices for a gamma sequence")
    cls.add_argument("--gammas", metavar="BITS", help="comma-separated arrivals, e.g. 1,0,1")
    cls.set_defaults(func=cmd_classify)
    probe = sub.add_parser("probe-channel", parents=[common], help="tabulate sequence probabilities")
    probe.add_argument("--n", type=int, metavar="N", help="sequence length override")
    probe.set_defaults(func=cmd_probe_channel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"rseio: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DomainError) as exc:
        print(f"rseio: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"rseio: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RseioError as exc:
        print(f"rseio: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
