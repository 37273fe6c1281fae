"""Run configuration, calendar and parameter containers.

Configurations are TOML files. Every key is validated and every default is
materialised at load time, so the objects returned here are safe to share
read-only between workers. The schema is documented in ``docs/config.md``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from .priors import Prior
from .severity import DelayPmf, discretize_delay

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration input."""


# ---------------------------------------------------------------------------
# Calendar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Calendar:
    """Daily grid ``u = 0..n_days-1`` grouped into 7-day weeks starting at ``u = 0``.

    The last week may be partial when `n_days` is not a multiple of 7.
    `closure_windows` are inclusive ``(u_start, u_end)`` day ranges.
    """

    n_days: int
    closure_windows: tuple = ()
    start_dow: int = 0

    def __post_init__(self):
        if self.n_days < 1:
            raise ConfigError("calendar needs at least one day")
        wins = tuple((int(a), int(b)) for a, b in self.closure_windows)
        prev_end = -1
        for a, b in wins:
            if not (0 <= a <= b < self.n_days):
                raise ConfigError(f"closure window {(a, b)} outside [0, {self.n_days - 1}]")
            if a <= prev_end:
                raise ConfigError("closure windows must be sorted and disjoint")
            prev_end = b
        if not 0 <= self.start_dow <= 6:
            raise ConfigError("start_dow must be in 0..6")
        object.__setattr__(self, "closure_windows", wins)

    @classmethod
    def from_weeks(cls, n_weeks: int, closure_windows=(), start_dow: int = 0) -> "Calendar":
        return cls(7 * int(n_weeks), tuple(closure_windows), start_dow)

    @property
    def n_weeks(self) -> int:
        return -(-self.n_days // 7)

    @property
    def day_to_week(self) -> np.ndarray:
        return np.arange(self.n_days) // 7

    @property
    def day_of_week(self) -> np.ndarray:
        return (np.arange(self.n_days) + self.start_dow) % 7

    @property
    def days_in_week(self) -> np.ndarray:
        return np.bincount(self.day_to_week, minlength=self.n_weeks)

    def closure_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_days, dtype=bool)
        for a, b in self.closure_windows:
            mask[a:b + 1] = True
        return mask


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

PROBABILITY_PARAMS = ("pi", "iota", "theta_h", "theta_ic", "theta_f",
                      "zeta_h", "zeta_ic", "zeta_g")
RATE_PARAMS = ("beta", "sigma", "gamma", "kappa")
REAL_PARAMS = ("bg_a0", "bg_a1", "bg_a2")
SCALAR_PARAMS = RATE_PARAMS + PROBABILITY_PARAMS + REAL_PARAMS

DEFAULT_DELAYS = {
    "inf_to_hosp": {"family": "exponential", "rate": 0.3},
    "hosp_to_ic": {"family": "exponential", "rate": 0.4},
    "inf_to_gp": {"family": "exponential", "rate": 0.5},
}


@dataclass(frozen=True)
class ParamSet:
    """Full parameter vector of transmission, severity, detection and background.

    `zeta_h` and `zeta_ic` are scalars or per-week vectors. `dow_effect` holds
    seven day-of-week multipliers of `zeta_g`, normalised to mean one.
    """

    beta: float = 0.63
    pi: float = 0.3
    iota: float = 0.0001
    sigma: float = 0.25
    gamma: float = 1 / 3.5
    kappa: float = 1.0
    n_pop: float = 10000.0
    theta_h: float = 0.1
    theta_ic: float = 0.1
    theta_f: float = 0.0
    zeta_h: Any = 0.1
    zeta_ic: Any = 0.1
    zeta_g: float = 1.0
    dow_effect: tuple = (1.0,) * 7
    bg_a0: float = 0.0
    bg_a1: float = 0.0
    bg_a2: float = 0.0
    bg_period: float = 52.0
    bg_week_offset: int = 0
    stages: tuple = (1, 1)
    init_weights: tuple | None = None
    delay_inf_to_hosp: DelayPmf = field(
        default_factory=lambda: discretize_delay("exponential", {"rate": 0.3}))
    delay_hosp_to_ic: DelayPmf = field(
        default_factory=lambda: discretize_delay("exponential", {"rate": 0.4}))
    delay_inf_to_gp: DelayPmf = field(
        default_factory=lambda: discretize_delay("exponential", {"rate": 0.5}))

    def __post_init__(self):
        dow = np.asarray(self.dow_effect, dtype=float)
        if dow.shape != (7,) or np.any(dow < 0) or dow.sum() <= 0:
            raise ConfigError("dow_effect must be 7 nonnegative multipliers")
        object.__setattr__(self, "dow_effect", tuple(float(v) for v in dow * 7.0 / dow.sum()))
        for name in ("zeta_h", "zeta_ic"):
            v = getattr(self, name)
            if np.ndim(v) > 0:
                object.__setattr__(self, name, tuple(float(x) for x in np.ravel(v)))
        object.__setattr__(self, "stages", tuple(int(s) for s in self.stages))

    def replace(self, **changes) -> "ParamSet":
        return replace(self, **changes)

    def check(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        bad = []
        for name in PROBABILITY_PARAMS:
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all((v >= 0) & (v <= 1)):
                bad.append(f"{name} must lie in [0,1]")
        for name in RATE_PARAMS:
            v = getattr(self, name)
            # beta = 0 switches transmission off and is allowed
            ok = v >= 0 if name == "beta" else v > 0
            if not (ok and math.isfinite(v)):
                bad.append(f"{name} must be > 0")
        for name in REAL_PARAMS:
            if not math.isfinite(getattr(self, name)):
                bad.append(f"{name} must be finite")
        if self.pi + self.iota > 1:
            bad.append("pi + iota must be <= 1")
        if not self.n_pop > 0:
            bad.append("n_pop must be > 0")
        if any(m not in (1, 2) for m in self.stages) or len(self.stages) != 2:
            bad.append("stages must be two values in {1, 2}")
        if np.any(self.zeta_g * np.asarray(self.dow_effect) > 1):
            bad.append("zeta_g * dow_effect must lie in [0,1]")
        if self.init_weights is not None and (
                len(self.init_weights) != sum(self.stages) or min(self.init_weights) < 0):
            bad.append("init_weights must give one nonnegative weight per E and I stage")
        return bad

    def validate(self) -> "ParamSet":
        bad = self.check()
        if bad:
            raise ConfigError("; ".join(bad))
        return self

    def is_valid(self) -> bool:
        return not self.check()

    def zeta_h_weekly(self, n_weeks: int) -> np.ndarray:
        return _weekly(self.zeta_h, n_weeks, "zeta_h")

    def zeta_ic_weekly(self, n_weeks: int) -> np.ndarray:
        return _weekly(self.zeta_ic, n_weeks, "zeta_ic")

    def zeta_g_daily(self, cal: Calendar) -> np.ndarray:
        return self.zeta_g * np.asarray(self.dow_effect)[cal.day_of_week]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, DelayPmf):
                out[f.name] = dict(v.spec) if v.spec else {"probs": v.probs.tolist()}
            elif isinstance(v, tuple):
                out[f.name] = list(v)
            else:
                out[f.name] = v
        return out


def _weekly(v, n_weeks, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(n_weeks, float(arr))
    if arr.size != n_weeks:
        raise ConfigError(f"{name} has {arr.size} weekly values, calendar has {n_weeks} weeks")
    return arr.copy()


def delay_from_dict(d: dict, key: str = "delay") -> DelayPmf:
    d = dict(d)
    if "probs" in d:
        extra = set(d) - {"probs", "delta"}
        if extra:
            raise ConfigError(f"{key}: unknown keys {sorted(extra)}")
        p = np.asarray(d["probs"], dtype=float)
        return DelayPmf(p / p.sum(), float(d.get("delta", 1.0)), spec={"probs": p.tolist()})
    family = d.pop("family", None)
    if family is None:
        raise ConfigError(f"{key}: needs 'family' or 'probs'")
    delta = float(d.pop("delta", 1.0))
    tail_tol = float(d.pop("tail_tol", 1e-6))
    allowed = {"exponential": {"rate"}, "exp": {"rate"}, "gamma": {"shape", "rate"}}
    if family not in allowed:
        raise ConfigError(f"{key}: unknown delay family {family!r}")
    if set(d) != allowed[family]:
        raise ConfigError(f"{key}: {family} delay needs exactly {sorted(allowed[family])}")
    try:
        return discretize_delay(family, d, delta, tail_tol)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

STREAMS = ("hospital", "icu", "gp", "virology")
LIK_MODES = ("joint", "joint-alt", "independent", "brute")

DEFAULT_PRIORS = {
    "beta": {"dist": "gamma", "shape": 2.0, "rate": 2.0},
    "pi": {"dist": "beta", "a": 1.0, "b": 1.0},
    "iota": {"dist": "beta", "a": 1.0, "b": 100.0},
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    iterations: int
    burnin: int = 0
    params: ParamSet = field(default_factory=ParamSet)
    n_weeks: int = 33
    n_days: int | None = None
    closure_windows: tuple = ()
    start_dow: int = 0
    streams: tuple = ("hospital", "icu")
    likelihood: str = "joint"
    algorithm: str = "gimh"
    particles: int = 2000
    adapt: bool = True
    target_accept: float = 0.234
    proposal_sd: dict = field(default_factory=dict)
    max_init_retries: int = 10
    progress_every: int = 0
    priors: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    tested_per_week: int = 100
    brute_max_count: int | None = None

    @property
    def calendar(self) -> Calendar:
        n_days = self.n_days if self.n_days is not None else 7 * self.n_weeks
        return Calendar(n_days, self.closure_windows, self.start_dow)

    @property
    def free_params(self) -> list[str]:
        return [k for k, p in self.priors.items() if not p.is_fixed]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "iterations": self.iterations, "burnin": self.burnin,
            "model": {"n_weeks": self.n_weeks, "n_days": self.n_days,
                      "closure_windows": [list(w) for w in self.closure_windows],
                      "start_dow": self.start_dow, "streams": list(self.streams),
                      "likelihood": self.likelihood, "tested_per_week": self.tested_per_week},
            "params": self.params.to_dict(),
            "sampler": {"algorithm": self.algorithm, "particles": self.particles,
                        "adapt": self.adapt, "target_accept": self.target_accept,
                        "proposal_sd": dict(self.proposal_sd),
                        "max_init_retries": self.max_init_retries,
                        "progress_every": self.progress_every},
            "priors": {k: p.to_dict() for k, p in self.priors.items()},
            "data": dict(self.data),
        }


_TOP_KEYS = {"seed", "iterations", "burnin", "model", "params", "sampler", "priors", "data"}
_MODEL_KEYS = {"n_weeks", "n_days", "closure_windows", "start_dow", "streams",
               "likelihood", "tested_per_week", "brute_max_count"}
_SAMPLER_KEYS = {"algorithm", "particles", "adapt", "target_accept", "proposal_sd",
                 "max_init_retries", "progress_every"}
_DATA_KEYS = {"weekly", "gp", "virology"}
_PARAM_ALIASES = {"N": "n_pop"}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def params_from_dict(d: dict, base: ParamSet | None = None) -> ParamSet:
    d = {_PARAM_ALIASES.get(k, k): v for k, v in d.items()}
    base = base or ParamSet()
    names = {f.name for f in fields(ParamSet)}
    changes = {}
    delays = d.pop("delays", None)
    if delays is not None:
        _check_keys(delays, set(DEFAULT_DELAYS), "params.delays")
        for k, spec in delays.items():
            changes[f"delay_{k}"] = delay_from_dict(spec, f"params.delays.{k}")
    for k, v in d.items():
        if k not in names or k.startswith("delay_"):
            raise ConfigError(f"unknown key {k!r} in params")
        if isinstance(v, list):
            v = tuple(v)
        changes[k] = v
    try:
        ps = base.replace(**changes)
    except ConfigError as exc:
        raise ConfigError(f"params: {exc}") from None
    bad = ps.check()
    if bad:
        raise ConfigError("params: " + "; ".join(bad))
    return ps


def config_from_dict(raw: dict, env: dict | None = None) -> RunConfig:
    """Validate a parsed configuration mapping and fill defaults."""
    raw = dict(raw)
    _check_keys(raw, _TOP_KEYS, "top level")
    for req in ("seed", "iterations"):
        if req not in raw:
            raise ConfigError(f"missing required key {req!r}")
    env = os.environ if env is None else env
    seed = raw["seed"]
    if env.get("EPIJOINT_SEED"):
        seed = env["EPIJOINT_SEED"]
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    iterations = raw["iterations"]
    burnin = raw.get("burnin", 0)
    if not isinstance(iterations, int) or not isinstance(burnin, int):
        raise ConfigError("iterations and burnin must be integers")
    if not iterations > burnin >= 0:
        raise ConfigError("need iterations > burnin >= 0")

    model = dict(raw.get("model", {}))
    _check_keys(model, _MODEL_KEYS, "[model]")
    sampler = dict(raw.get("sampler", {}))
    _check_keys(sampler, _SAMPLER_KEYS, "[sampler]")
    data = dict(raw.get("data", {}))
    _check_keys(data, _DATA_KEYS, "[data]")

    params = params_from_dict(dict(raw.get("params", {})))

    streams = tuple(model.get("streams", ("hospital", "icu")))
    for s in streams:
        if s not in STREAMS:
            raise ConfigError(f"model.streams: unknown stream {s!r}; choose from {STREAMS}")
    likelihood = model.get("likelihood", "joint")
    if likelihood not in LIK_MODES:
        raise ConfigError(f"model.likelihood must be one of {LIK_MODES}")
    n_weeks = int(model.get("n_weeks", 33))
    if n_weeks < 1:
        raise ConfigError("model.n_weeks must be >= 1")

    algorithm = str(sampler.get("algorithm", "gimh")).lower()
    if algorithm not in ("gimh", "mcwm"):
        raise ConfigError("sampler.algorithm must be 'gimh' or 'mcwm'")
    particles = sampler.get("particles", 2000)
    if not isinstance(particles, int) or particles < 1:
        raise ConfigError("sampler.particles must be an integer >= 1")
    target = float(sampler.get("target_accept", 0.234))
    if not 0 < target < 1:
        raise ConfigError("sampler.target_accept must lie in (0,1)")
    proposal_sd = {k: float(v) for k, v in dict(sampler.get("proposal_sd", {})).items()}

    priors_raw = raw.get("priors")
    priors_raw = DEFAULT_PRIORS if priors_raw is None else priors_raw
    priors = {}
    for name, spec in priors_raw.items():
        name = _PARAM_ALIASES.get(name, name)
        if name not in SCALAR_PARAMS:
            raise ConfigError(f"priors: {name!r} is not an estimable scalar parameter")
        if isinstance(spec, str):
            spec = {"dist": spec}
        try:
            priors[name] = Prior.from_dict(spec)
        except ValueError as exc:
            raise ConfigError(f"priors.{name}: {exc}") from None
        if name in ("zeta_h", "zeta_ic") and np.ndim(getattr(params, name)) > 0 \
                and not priors[name].is_fixed:
            raise ConfigError(f"priors.{name}: per-week detection cannot be sampled")
        if not priors[name].is_fixed and not np.isfinite(
                priors[name].logpdf(float(getattr(params, name)))):
            raise ConfigError(f"priors.{name}: initial value has zero prior density")
    for k in proposal_sd:
        if k not in priors or priors[k].is_fixed:
            raise ConfigError(f"sampler.proposal_sd: {k!r} is not a free parameter")

    return RunConfig(
        seed=seed, iterations=iterations, burnin=burnin, params=params,
        n_weeks=n_weeks, n_days=model.get("n_days"),
        closure_windows=tuple(tuple(w) for w in model.get("closure_windows", ())),
        start_dow=int(model.get("start_dow", 0)), streams=streams, likelihood=likelihood,
        algorithm=algorithm, particles=particles, adapt=bool(sampler.get("adapt", True)),
        target_accept=target, proposal_sd=proposal_sd,
        max_init_retries=int(sampler.get("max_init_retries", 10)),
        progress_every=int(sampler.get("progress_every", 0)),
        priors=priors, data=data,
        tested_per_week=int(model.get("tested_per_week", 100)),
        brute_max_count=model.get("brute_max_count"),
    )


def load_config(path, env: dict | None = None) -> RunConfig:
    """Load and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        On malformed TOML or any schema/constraint violation; the message
        names the offending key.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    cfg = config_from_dict(raw, env)
    # data paths are relative to the config file
    data = {k: str((path.parent / v).resolve()) if v else v for k, v in cfg.data.items()}
    return replace(cfg, data=data)
