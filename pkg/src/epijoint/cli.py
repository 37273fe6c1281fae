"""Command-line interface.

Subcommands: ``simulate``, ``estimate-lik``, ``fit``, ``simstudy`` and
``summarize``. Every command that writes files also writes a manifest JSON
with the package version (``git describe`` when available), the seed and a
hash of the resolved configuration.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 infeasible
problem size (brute-force enumeration too large).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
from pathlib import Path
import subprocess
import sys

import numpy as np

from . import __version__
from ._core import BACKEND
from .config import Calendar, ConfigError, RunConfig, load_config
from .data import (ObservationError, ObservationSet, load_chain, load_observations, save_chain,
                   write_columns, write_observations)
from .likelihood import InfeasibleSizeError, loglik_full
from .observation import BackgroundModel, DetectionSchedule, simulate_observations
from .sampler import (EmptyChainError, InitializationError, MCMCSettings, run_chain,
                      summarize_chain)
from .severity import convolve_rates, simulate_latent_path
from .transmission import solve_transmission

log = logging.getLogger("epijoint")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors, not runtime errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# --- manifest --------------------------------------------------------------

def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=_default).encode()
    return hashlib.sha256(blob).hexdigest()


def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def write_manifest(path, command: str, seed, config: dict, outputs: dict, extra=None):
    m = {"tool": "epijoint", "version": version_string(), "backend": BACKEND,
         "command": command, "seed": seed, "config_hash": config_hash(config),
         "config": config, "outputs": {k: str(v) for k, v in outputs.items()}}
    if extra:
        m.update(extra)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(m, indent=2, sort_keys=True, default=_default) + "\n")
    return m


# --- helpers ---------------------------------------------------------------

def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=int(args.seed))
    return cfg


def _observations(cfg: RunConfig, cal: Calendar, data_dir=None) -> ObservationSet:
    if data_dir is not None:
        d = Path(data_dir)
        paths = {"weekly": d / "weekly.csv"}
        for key, name in (("gp", "gp_daily.csv"), ("virology", "virology.csv")):
            if (d / name).exists():
                paths[key] = d / name
    else:
        paths = dict(cfg.data)
    if "weekly" not in paths:
        raise ConfigError("no observed data: set [data].weekly in the config or pass --data")
    return load_observations(paths, cal)


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    return max(1, t if t else (os.cpu_count() or 1))


# --- commands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    cal = cfg.calendar
    params = cfg.params
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    xi0 = solve_transmission(params, cal)
    path = simulate_latent_path(xi0, params, rng)
    lam_f = params.theta_f * convolve_rates(xi0, params.delay_inf_to_gp)
    bg = BackgroundModel.from_params(params)
    obs = simulate_observations(path, DetectionSchedule.from_params(params, cal), bg, cal, rng,
                                lam_f=lam_f, tested=cfg.tested_per_week, streams=cfg.streams)
    files = {"xi0": out / "xi0.csv", "latent": out / "latent_path.csv"}
    write_columns(files["xi0"], {"day": np.arange(cal.n_days), "xi0": xi0})
    write_columns(files["latent"], {"day": np.arange(cal.n_days), **path.as_columns()})
    files.update(write_observations(obs, out))
    files["manifest"] = out / "manifest.json"
    write_manifest(files["manifest"], "simulate", cfg.seed, cfg.to_dict(), files)
    if args.emit_xi:
        sys.stdout.write("day,xi0\n")
        for u, v in enumerate(xi0):
            sys.stdout.write(f"{u},{float(v)!r}\n")
    log.info("wrote %s", ", ".join(str(v) for v in files.values()))
    return EXIT_OK


def cmd_estimate_lik(args) -> int:
    cfg = _load_cfg(args)
    cal = cfg.calendar
    obs = _observations(cfg, cal, args.data)
    mode = args.mode or cfg.likelihood
    particles = args.particles or cfg.particles
    rng = np.random.default_rng(cfg.seed)
    kw = {}
    if cfg.brute_max_count is not None:
        kw["brute_max_count"] = cfg.brute_max_count
    est = loglik_full(obs, cfg.params, cal, cfg.streams, mode, particles, rng, **kw)
    rec = est.to_dict()
    rec.update({"mode": mode, "seed": cfg.seed, "config_hash": config_hash(cfg.to_dict())})
    print(json.dumps(rec, default=_default, allow_nan=True))
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_cfg(args)
    cal = cfg.calendar
    obs = _observations(cfg, cal, args.data)
    algorithm = args.algorithm or cfg.algorithm
    free = [k for k in cfg.free_params]
    if not free:
        raise ConfigError("no free parameters: give at least one non-fixed prior")
    sd = np.array([cfg.proposal_sd.get(k, 0.1) for k in free])
    settings = MCMCSettings(
        algorithm=algorithm, n_iter=args.iterations or cfg.iterations,
        n_burnin=cfg.burnin if args.burnin is None else args.burnin,
        proposal_cov=np.diag(sd ** 2), adapt=cfg.adapt, target_accept=cfg.target_accept,
        n_particles=args.particles or cfg.particles, seed=cfg.seed,
        max_init_retries=cfg.max_init_retries,
        progress_every=args.progress if args.progress is not None else cfg.progress_every)
    out = Path(args.out)
    records = run_chain(obs, cal, settings, {k: cfg.priors[k] for k in free}, cfg.params,
                        lik_mode=cfg.likelihood, streams=cfg.streams)
    save_chain(records, out)
    manifest = out.with_name(out.stem + ".manifest.json")
    config = cfg.to_dict()
    config["sampler"].update({"algorithm": algorithm, "particles": settings.n_particles})
    config.update({"iterations": settings.n_iter, "burnin": settings.n_burnin})
    acc = float(np.mean([r.accepted for r in records if not r.burnin]))
    write_manifest(manifest, "fit", cfg.seed, config, {"chain": out},
                   {"acceptance_rate": acc})
    log.info("wrote %d records to %s (acceptance %.3f)", len(records), out, acc)
    return EXIT_OK


def cmd_simstudy(args) -> int:
    from dataclasses import replace

    from . import simstudy as ss

    base = {"small": ss.small_scenario, "large": ss.large_scenario,
            "sweep": ss.small_scenario}[args.scenario]
    free = {"transmission": ss.TRANSMISSION,
            "transmission+severity": ss.TRANSMISSION_SEVERITY}[args.free]
    n_default = 50 if args.scale == "desk" else 500
    scenario = base(n_datasets=args.datasets or n_default, free_params=free)
    maker = ss.StudySettings.desk if args.scale == "desk" else ss.StudySettings.paper
    kw = {"seed": args.seed, "threads": _threads(args), "out_dir": str(args.out),
          "n_weeks": args.weeks}
    for name, val in (("n_iter", args.iterations), ("n_burnin", args.burnin),
                      ("n_particles", args.particles), ("algorithm", args.algorithm)):
        if val is not None:
            kw[name] = val
    settings = maker(**kw)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    if args.scenario == "sweep":
        result = ss.run_influential_sweep(scenario, settings)
    else:
        result = ss.run_scenario(scenario, settings).proportions
    config = {"scenario": args.scenario, "free": list(free), "scale": args.scale,
              "n_datasets": scenario.n_datasets,
              "settings": {k: v for k, v in vars(replace(settings, out_dir=None)).items()}}
    write_manifest(Path(args.out) / "manifest.json", "simstudy", args.seed, config,
                   {"pwd": "pwd.csv", "proportions": "proportions.csv"})
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _fmt(x):
    return f"{x:.4g}"


def cmd_summarize(args) -> int:
    records = load_chain(args.chain)
    names = args.params.split(",") if args.params else None
    summ = summarize_chain(records, names, include_burnin=args.include_burnin)
    cols = ["param", "mean", "var", "median", "q2.5", "q97.5", "r95", "ess", "accept_rate"]
    rows = [[k] + [repr(v[c]) for c in cols[1:]] for k, v in summ.items()]
    text = ",".join(cols) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(text)
        write_manifest(Path(args.out).with_suffix(".manifest.json"), "summarize", None,
                       {"chain": str(args.chain), "params": names,
                        "include_burnin": args.include_burnin}, {"summary": args.out})
    else:
        sys.stdout.write(text)
    for k, v in summ.items():
        print(f"{k}: median {_fmt(v['median'])} (95% CrI {_fmt(v['q2.5'])}-{_fmt(v['q97.5'])})",
              file=sys.stderr)
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epijoint", description=__doc__.split("\n\n")[0],
                formatter_class=argparse.RawDescriptionHelpFormatter,
                epilog="exit codes: 0 ok, 1 validation error, 2 runtime error, "
                       "3 infeasible problem size")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on worker processes (default: all available cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one season from a config")
    s.add_argument("--config", required=True, help="TOML run configuration")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--emit-xi", action="store_true",
                   help="also print daily new infections as CSV 'day,xi0' to stdout")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate-lik", help="evaluate one log-likelihood estimate")
    s.add_argument("--config", required=True, help="TOML run configuration (parameters, data)")
    s.add_argument("--data", help="directory with weekly.csv (and optional gp_daily.csv, "
                                  "virology.csv); overrides [data]")
    s.add_argument("--mode", choices=["independent", "joint", "joint-alt", "brute"],
                   help="estimator (default: model.likelihood from the config)")
    s.add_argument("--particles", type=int, help="Monte Carlo particles")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.set_defaults(func=cmd_estimate_lik)

    s = sub.add_parser("fit", help="run a pseudo-marginal MCMC chain")
    s.add_argument("--config", required=True, help="TOML run configuration")
    s.add_argument("--data", help="observation directory; overrides [data]")
    s.add_argument("--algorithm", choices=["gimh", "mcwm"], help="pseudo-marginal variant")
    s.add_argument("--out", required=True, help="chain output (JSON lines)")
    s.add_argument("--iterations", type=int, help="override total iterations")
    s.add_argument("--burnin", type=int, help="override burn-in iterations")
    s.add_argument("--particles", type=int, help="override Monte Carlo particles")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--progress", type=int, metavar="K",
                   help="log a progress line to stderr every K iterations")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("simstudy", help="joint vs independent simulation study")
    s.add_argument("--scenario", required=True, choices=["small", "large", "sweep"])
    s.add_argument("--scale", choices=["desk", "paper"], default="desk",
                   help="desk: 50 datasets, 500 particles; paper: full scale, 500 datasets, 2000 particles")
    s.add_argument("--free", choices=["transmission", "transmission+severity"],
                   default="transmission", help="parameters estimated (others at truth)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--datasets", type=int, help="override the number of datasets")
    s.add_argument("--iterations", type=int, help="override iterations per chain")
    s.add_argument("--burnin", type=int, help="override burn-in per chain")
    s.add_argument("--particles", type=int, help="override particles")
    s.add_argument("--algorithm", choices=["gimh", "mcwm"], help="joint-fit variant (default mcwm)")
    s.add_argument("--weeks", type=int, default=33, help="weeks of simulated data")
    s.add_argument("--seed", type=int, default=2024, help="study seed")
    s.set_defaults(func=cmd_simstudy)

    s = sub.add_parser("summarize", help="posterior summaries of a chain")
    s.add_argument("chain", help="chain file written by 'fit'")
    s.add_argument("--out", help="summary CSV (default: stdout)")
    s.add_argument("--params", help="comma-separated parameter names (default: all)")
    s.add_argument("--include-burnin", action="store_true", help="keep burn-in records")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or getattr(args, "progress", None)
                        else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InfeasibleSizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ObservationError, EmptyChainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InitializationError, OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
