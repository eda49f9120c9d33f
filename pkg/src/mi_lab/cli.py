"""Command-line entry point.

    mi-lab bench [--rho=0.5 --estimator=doe_gaussian ...]
    mi-lab demo-kl | demo-entropy | demo-dv [--N=... --trials=...]
    mi-lab oracle <name> [--key=value ...]
    mi-lab selftest

Parameters resolve as command defaults, then the ``--config`` JSON file, then
command-line flags. The master seed comes from ``--seed``, the config file's
``seed``, or ``MI_LAB_SEED``, in that order. Exit status is 0 on success, 1 on
a numeric or I/O failure, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import distributions as dist
from . import experiments as exp
from . import io
from . import oracles
from .errors import NumericError, UsageError
from .selftest import run_selftest

SEED_ENV = "MI_LAB_SEED"
DEFAULT_OUT = "mi_lab_out"

COMMAND_DEFAULTS = {
    "bench": {
        "rho": 0.5, "d": 128, "N": 128, "steps": 3000, "estimator": "doe_gaussian",
        "lr": 5e-4, "hidden": 256, "depth": 2, "activation": "relu",
        "mine_decay": 0.9, "interp_alpha": 0.5, "tied_scale": False, "grid": False,
    },
    "demo-kl": {"N": 100, "trials": 100_000, "support": 16, "zipf_s": 1.1},
    "demo-entropy": {"k": 2, "N": 50, "trials": 10_000, "support": 1_000_000, "zipf_s": 1.1},
    "demo-dv": {"N": 100, "trials": 10_000, "target_kl": 8.0, "eps": 1e-6},
    "selftest": {},
}

ORACLE_DEFAULTS = {
    "gaussian-mi": {"d": 128, "rho": 0.5},
    "rho-for-mi": {"d": 128, "mi": 18.41},
    "ceilings": {"N": 128, "k": 2},
    "outlier": {"N": 100, "phi": 0.01},
    "chernoff": {"N": 1000, "delta": 0.05, "F_max": 10.0, "mean": 0.0},
    "pac-bayes": {"N": 10_000, "delta": 0.1, "F_max": 10.0, "lam": 5.0, "sigma": 1.0,
                  "theta_norm_sq": 0.0, "loss": 0.0},
}

# stream index per command, so demos never share a seed stream with bench
_RUN_INDEX = {"bench": 0, "demo-kl": 1, "demo-entropy": 2, "demo-dv": 3}


@dataclass
class CliConfig:
    command: str
    oracle_name: str | None = None
    config_path: str | None = None
    overrides: dict = field(default_factory=dict)
    output_dir: str = DEFAULT_OUT
    master_seed: int = 0
    params: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)

    def exit(self, status=0, message=None):
        if status:
            raise UsageError(message or "invalid arguments")
        raise SystemExit(status)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _arg_type(default):
    if isinstance(default, bool):
        return _parse_bool
    return type(default)


def _add_keys(parser, defaults: dict):
    for key, default in defaults.items():
        parser.add_argument(f"--{key}", dest=key, type=_arg_type(default), default=argparse.SUPPRESS)


def _add_common(parser):
    parser.add_argument("--config", dest="_config", default=None)
    parser.add_argument("--out", dest="_out", default=DEFAULT_OUT)
    parser.add_argument("--seed", dest="_seed", type=int, default=None)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mi-lab", description="Mutual-information estimators and adversary demos.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, defaults in COMMAND_DEFAULTS.items():
        p = sub.add_parser(name)
        _add_common(p)
        _add_keys(p, defaults)
    p = sub.add_parser("oracle")
    p.add_argument("name", choices=sorted(ORACLE_DEFAULTS))
    _add_common(p)
    union = {}
    for defaults in ORACLE_DEFAULTS.values():
        union.update(defaults)
    _add_keys(p, union)
    return parser


def _type_ok(value, default) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if isinstance(default, float):
        return isinstance(value, (int, float))
    return isinstance(value, type(default))


def _load_config_file(path: str, defaults: dict) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    out = {}
    for key, value in data.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise UsageError("config key 'seed' must be an integer")
            out[key] = value
            continue
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        if not _type_ok(value, defaults[key]):
            raise UsageError(f"config key {key!r} expects {type(defaults[key]).__name__}, "
                             f"got {type(value).__name__}")
        out[key] = float(value) if isinstance(defaults[key], float) else value
    return out


def _resolve_seed(cli_seed, file_seed) -> int:
    if cli_seed is not None:
        seed = cli_seed
    elif file_seed is not None:
        seed = file_seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer") from exc
    else:
        seed = 0
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    return seed


def parse_config(args) -> CliConfig:
    """Parse argv (without the program name) into a resolved :class:`CliConfig`."""
    args = list(args)
    if not args:
        commands = ", ".join(list(COMMAND_DEFAULTS) + ["oracle"])
        raise UsageError(f"missing command; choose one of: {commands}")
    ns = vars(_build_parser().parse_args(args))
    command = ns.pop("command")
    if command is None:
        raise UsageError("missing command")
    config_path, out, cli_seed = ns.pop("_config"), ns.pop("_out"), ns.pop("_seed")
    oracle_name = ns.pop("name", None)
    defaults = ORACLE_DEFAULTS[oracle_name] if command == "oracle" else COMMAND_DEFAULTS[command]
    for key in ns:
        if key not in defaults:
            raise UsageError(f"unknown key {key!r} for {oracle_name or command}")
    file_values = _load_config_file(config_path, defaults) if config_path else {}
    file_seed = file_values.pop("seed", None)
    params = {**defaults, **file_values, **ns}
    return CliConfig(command, oracle_name, config_path, dict(ns), out,
                     _resolve_seed(cli_seed, file_seed), params)


def bench_config(cfg: CliConfig, seed: int = 0) -> exp.BenchConfig:
    p = cfg.params
    return exp.BenchConfig(
        spec=dist.GaussianPairSpec(p["d"], p["rho"]), kind=p["estimator"], N=p["N"],
        steps=p["steps"], seed=seed, lr=p["lr"], hidden=p["hidden"], depth=p["depth"],
        activation=p["activation"], mine_decay=p["mine_decay"],
        interp_alpha=p["interp_alpha"], tied_scale=p["tied_scale"],
    )


def _g(x: float) -> str:
    return f"{x:.6g}"


def _run_oracle(name: str, p: dict, out=print):
    if name == "gaussian-mi":
        out(_g(dist.gaussian_mi(dist.GaussianPairSpec(p["d"], p["rho"]))))
    elif name == "rho-for-mi":
        out(_g(dist.rho_for_mi(p["mi"], p["d"])))
    elif name == "ceilings":
        c = oracles.ceilings(p["N"], p["k"])
        out(f"ln_N = {_g(c.ln_N)}\ntwo_ln_n_plus_5 = {_g(c.two_ln_n_plus_5)}\n"
            f"entropy_ceiling = {_g(c.entropy_ceiling)}")
    elif name == "outlier":
        out(_g(oracles.outlier_no_hit_prob(p["N"], p["phi"]).analytic))
    elif name == "chernoff":
        q = oracles.BoundQuery(p["N"], p["delta"], p["F_max"])
        lo, hi = oracles.chernoff_ci(q, p["mean"])
        out(f"halfwidth = {_g(oracles.chernoff_halfwidth(q))}\ninterval = [{_g(lo)}, {_g(hi)}]")
    elif name == "pac-bayes":
        q = oracles.BoundQuery(p["N"], p["delta"], p["F_max"], lam=p["lam"], sigma=p["sigma"],
                               theta_norm_sq=p["theta_norm_sq"])
        out(f"prefactor = {_g(oracles.pac_bayes_prefactor(p['lam']))}\n"
            f"bound = {_g(oracles.pac_bayes_bound(q, p['loss']))}")


def _run_bench(cfg: CliConfig, out=print) -> int:
    base = bench_config(cfg)
    if cfg.params["grid"]:
        configs = exp.grid_configs(base, master_seed=cfg.master_seed)
    else:
        configs = [replace(base, seed=exp.derive_seed(cfg.master_seed, 0, 0))]
    records = []
    for c in configs:
        rec = exp.run_benchmark(c)
        records.append(rec)
        out(f"{c.kind.value} rho={_g(c.spec.rho)} lr={_g(c.lr)} final={_g(rec.final_estimate)} "
            f"truth={_g(rec.ground_truth)} ln_N={_g(rec.ln_N)} flagged={int(rec.flagged.sum())}")
    for path in io.write_records(records, cfg.output_dir):
        out(f"wrote {path}")
    return 0


def _run_demo(cfg: CliConfig, out=print) -> int:
    p = cfg.params
    rng = np.random.default_rng(exp.derive_seed(cfg.master_seed, _RUN_INDEX[cfg.command], 0))
    if cfg.command == "demo-kl":
        q = dist.uniform_categorical(p["support"])
        target = dist.zipf_categorical(p["zipf_s"], p["support"])
        report = exp.run_kl_adversary_demo(target, q, p["N"], p["trials"], rng)
    elif cfg.command == "demo-entropy":
        report = exp.run_entropy_adversary_demo(
            dist.zipf_categorical(p["zipf_s"], p["support"]), p["k"], p["N"], p["trials"], rng)
        if isinstance(report, dist.VacuousTheorem):
            out(f"theorem vacuous: support {report.support_size} < 2kN^2, "
                f"H = {_g(report.entropy)} < {_g(report.ceiling)}")
            return 0
    else:
        target, q = exp.heavy_ratio_pair(p["target_kl"], p["eps"])
        report = exp.run_dv_saturation(target, q, p["N"], p["trials"], rng)
    payload = {"command": cfg.command, "params": p, "seed": cfg.master_seed, **report.to_dict()}
    path = io.write_report(payload, Path(cfg.output_dir) / f"{cfg.command.replace('-', '_')}.json")
    out(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    out(f"wrote {path}")
    return 0


def run_command(cfg: CliConfig, out=print) -> int:
    if cfg.command == "oracle":
        _run_oracle(cfg.oracle_name, cfg.params, out)
        return 0
    if cfg.command == "selftest":
        results = run_selftest(out)
        return 0 if all(ok for _, ok in results) else 1
    if cfg.command == "bench":
        return _run_bench(cfg, out)
    return _run_demo(cfg, out)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run_command(parse_config(argv))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
