"""Likelihoods of weekly hospital and ICU admissions.

Hospital admissions in week ``s`` that reach ICU in week ``t`` form
independent Poisson counts ``Z[s, t]`` (Poisson splitting of the severity
cascade), with rates ``transfer[s, t]``. Everything below is written in terms
of these weekly transfer rates:

* the misspecified product of the two Poisson marginals,
* the unbiased particle estimators of the joint likelihood (ICU-first and
  hospital-first factorisations),
* an exact enumeration of the joint likelihood for small instances.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import itertools
import math

import numpy as np
from scipy.special import logsumexp

from . import _core
from .config import Calendar
from .observation import (BackgroundModel, loglik_gp, loglik_poisson_series,
                          loglik_virology, poisson_logpmf)
from .severity import convolve_rates

KINDS = ("exact_independent", "mc_joint_icu_first", "mc_joint_hosp_first", "brute_force")


class InfeasibleSizeError(ValueError):
    """Raised when exact enumeration would exceed the configured bound."""


@dataclass(frozen=True)
class LogLikEstimate:
    """A log-likelihood value with its estimator metadata.

    `mc_se` is the Monte Carlo standard error of the natural-scale estimate
    ``exp(value)``; it underflows to 0 for very small likelihoods, so
    `log_mc_se` carries the same quantity on the log scale.
    """

    value: float
    kind: str
    n_particles: int = 1
    mc_se: float = 0.0
    log_mc_se: float = -math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if self.mc_se < 0:
            raise ValueError("mc_se must be nonnegative")

    @property
    def rel_se(self) -> float:
        """Relative standard error ``mc_se / exp(value)``."""
        if not math.isfinite(self.value):
            return math.nan
        return math.exp(self.log_mc_se - self.value)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LogLikEstimate":
        return cls(**d)


def _calendar(xi0, cal):
    return cal if cal is not None else Calendar(len(xi0))


@dataclass(frozen=True)
class WeeklySeverity:
    """Weekly expected counts before detection.

    hosp : (T,) hospital admissions per week
    icu : (T,) ICU admissions per week
    transfer : (T, T) ICU-bound flow from hospital week ``s`` to ICU week ``t``
    remainder : (T,) hospital admissions not reaching ICU within the window
    """

    hosp: np.ndarray
    icu: np.ndarray
    transfer: np.ndarray
    remainder: np.ndarray


def weekly_severity(xi0, params, cal: Calendar | None = None) -> WeeklySeverity:
    cal = _calendar(xi0, cal)
    xi0 = np.asarray(xi0, dtype=float)
    n_days, T = cal.n_days, cal.n_weeks
    mu = params.theta_h * convolve_rates(xi0, params.delay_inf_to_hosp)
    starts = np.arange(0, n_days, 7)
    ends = np.minimum(starts + 6, n_days - 1)
    cdf = np.cumsum(params.delay_hosp_to_ic.probs)

    def cum(k):
        # P(delay <= k), zero for k < 0
        return np.where(k < 0, 0.0, cdf[np.clip(k, 0, cdf.size - 1)])

    u = np.arange(n_days)[:, None]
    g = cum(ends[None, :] - u) - cum(starts[None, :] - 1 - u)
    transfer = params.theta_ic * np.add.reduceat(mu[:, None] * g, starts, axis=0)
    transfer = np.triu(np.clip(transfer, 0.0, None))
    hosp = np.add.reduceat(mu, starts)
    icu = transfer.sum(axis=0)
    remainder = np.clip(hosp - transfer.sum(axis=1), 0.0, None)
    assert transfer.shape == (T, T)
    return WeeklySeverity(hosp, icu, transfer, remainder)


def _combine(log_head: float, logw: np.ndarray, kind: str) -> LogLikEstimate:
    n = logw.size
    m = float(np.max(logw))
    if not math.isfinite(m):
        return LogLikEstimate(-math.inf, kind, n, 0.0, -math.inf)
    w = np.exp(logw - m)
    mean = w.mean()
    value = log_head + m + math.log(mean)
    sd = float(w.std(ddof=1)) if n > 1 else 0.0
    if sd > 0:
        log_se = log_head + m + math.log(sd) - 0.5 * math.log(n)
        return LogLikEstimate(value, kind, n, math.exp(log_se), log_se)
    return LogLikEstimate(value, kind, n, 0.0, -math.inf)


def _detection(params, T):
    return params.zeta_h_weekly(T), params.zeta_ic_weekly(T)


def loglik_independent(obs, params, xi0, cal: Calendar | None = None) -> LogLikEstimate:
    """Product of the two Poisson marginals, ignoring the shared latent path."""
    cal = _calendar(xi0, cal)
    ws = weekly_severity(xi0, params, cal)
    zh, zic = _detection(params, cal.n_weeks)
    value = (loglik_poisson_series(obs.y_h, zh * ws.hosp)
             + loglik_poisson_series(obs.y_ic, zic * ws.icu))
    return LogLikEstimate(value, "exact_independent")


def icu_first_split(ws: WeeklySeverity):
    """Backward split table: for ICU week t, the hospital week t - k with prob p[t, k]."""
    T = ws.icu.size
    p = np.zeros((T, T))
    lens = np.zeros(T, dtype=np.int64)
    for t in range(T):
        if ws.icu[t] <= 0:
            continue
        col = ws.transfer[:t + 1, t][::-1]
        nz = np.flatnonzero(col > 0)
        L = int(nz[-1]) + 1
        p[t, :L] = col[:L] / col[:L].sum()
        lens[t] = L
    K = max(1, int(lens.max()))
    return np.ascontiguousarray(p[:, :K]), lens


def hosp_first_split(ws: WeeklySeverity):
    """Forward split table: hospital week s to ICU week s + k, last category = no ICU in window."""
    T = ws.hosp.size
    p = np.zeros((T, T + 1))
    lens = np.zeros(T, dtype=np.int64)
    for s in range(T):
        if ws.hosp[s] <= 0:
            continue
        row = ws.transfer[s, s:]
        nz = np.flatnonzero(row > 0)
        if nz.size == 0:
            continue
        L = int(nz[-1]) + 1
        probs = np.append(row[:L], ws.remainder[s])
        p[s, :L + 1] = probs / probs.sum()
        lens[s] = L + 1
    K = max(1, int(lens.max()))
    return np.ascontiguousarray(p[:, :K]), lens


def loglik_joint_mc(obs, params, xi0, n_particles: int, rng: np.random.Generator,
                    cal: Calendar | None = None) -> LogLikEstimate:
    """Unbiased particle estimate of ``p(y_h, y_ic | theta)``, ICU data first.

    ``p(y_ic)`` is the closed-form Poisson marginal. For each particle the
    undetected ICU admissions are added to the observed ones, every ICU
    admission is assigned to a hospital week with the exact conditional
    probabilities ``transfer[s, t] / icu[t]``, the hospital admissions that do
    not reach ICU inside the window are drawn as a Poisson remainder, and the
    particle is weighted by the Binomial detection density of ``y_h``.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    cal = _calendar(xi0, cal)
    ws = weekly_severity(xi0, params, cal)
    zh, zic = _detection(params, cal.n_weeks)
    log_ic = loglik_poisson_series(obs.y_ic, zic * ws.icu)
    if not math.isfinite(log_ic):
        return LogLikEstimate(-math.inf, "mc_joint_icu_first", n_particles)
    split_p, lens = icu_first_split(ws)
    logw = _core.joint_particles(obs.y_h, obs.y_ic, zh, (1.0 - zic) * ws.icu,
                                 split_p, lens, ws.remainder, n_particles, rng)
    return _combine(log_ic, logw, "mc_joint_icu_first")


def loglik_joint_mc_alt(obs, params, xi0, n_particles: int, rng: np.random.Generator,
                        cal: Calendar | None = None) -> LogLikEstimate:
    """Unbiased particle estimate of the joint likelihood, hospital data first."""
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    cal = _calendar(xi0, cal)
    ws = weekly_severity(xi0, params, cal)
    zh, zic = _detection(params, cal.n_weeks)
    log_h = loglik_poisson_series(obs.y_h, zh * ws.hosp)
    if not math.isfinite(log_h):
        return LogLikEstimate(-math.inf, "mc_joint_hosp_first", n_particles)
    split_p, lens = hosp_first_split(ws)
    logw = _core.alt_particles(obs.y_h, obs.y_ic, zic, (1.0 - zh) * ws.hosp,
                               split_p, lens, n_particles, rng)
    return _combine(log_h, logw, "mc_joint_hosp_first")


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def _transfer_by_loops(xi0, params, n_days):
    """Weekly transfer rates computed day by day with explicit loops."""
    f_h = params.delay_inf_to_hosp.probs
    f_ic = params.delay_hosp_to_ic.probs
    T = -(-n_days // 7)
    hosp = [0.0] * T
    transfer = [[0.0] * T for _ in range(T)]
    for u in range(n_days):
        mu = 0.0
        for d in range(min(u + 1, f_h.size)):
            mu += xi0[u - d] * f_h[d]
        mu *= params.theta_h
        hosp[u // 7] += mu
        for g in range(f_ic.size):
            v = u + g
            if v >= n_days:
                break
            transfer[u // 7][v // 7] += params.theta_ic * mu * f_ic[g]
    return np.array(hosp), np.array(transfer)


def _compositions(total, parts):
    """All nonnegative integer vectors of length `parts` summing to `total`."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 1 - prev - 1)
        yield out


def loglik_brute_force(obs, params, xi0, max_count: int = 2_000_000,
                       cal: Calendar | None = None) -> LogLikEstimate:
    """Exact joint log-likelihood by enumerating the detected ICU flows.

    Each ICU-bound flow ``Z[s, t]`` splits into a detected part ``D[s, t]``
    and an undetected part; ``y_ic[t]`` must equal ``sum_s D[s, t]``, so the
    detected parts range over integer compositions of the observed counts.
    The undetected parts and the hospital admissions that do not reach ICU
    merge into one Poisson count per hospital week, and the hospital
    likelihood given ``A_s = sum_t D[s, t]`` is the finite convolution
    ``sum_k Bin(k; A_s, zeta_h) Pois(y_h - k; zeta_h * rate_s)``. No latent
    support is truncated.

    Raises
    ------
    InfeasibleSizeError
        When the number of enumerated configurations would exceed `max_count`.
    """
    cal = _calendar(xi0, cal)
    T = cal.n_weeks
    xi0 = [float(v) for v in xi0]
    hosp, transfer = _transfer_by_loops(xi0, params, cal.n_days)
    zh, zic = _detection(params, T)
    y_h = [int(v) for v in obs.y_h]
    y_ic = [int(v) for v in obs.y_ic]

    size = 1
    for t in range(T):
        parts = sum(1 for s in range(t + 1) if transfer[s][t] > 0)
        if parts == 0:
            if y_ic[t] > 0:
                return LogLikEstimate(-math.inf, "brute_force")
            continue
        size *= math.comb(y_ic[t] + parts - 1, parts - 1)
        if size > max_count:
            raise InfeasibleSizeError(
                f"enumeration needs more than {max_count} configurations")

    # undetected ICU flow plus hospital admissions that never reach ICU in the window
    other = [hosp[s] - sum(zic[t] * transfer[s][t] for t in range(T)) for s in range(T)]
    other = [max(v, 0.0) for v in other]

    states = {tuple([0] * T): 0.0}
    for t in range(T):
        src = [s for s in range(t + 1) if transfer[s][t] > 0]
        if not src:
            continue
        rates = [zic[t] * transfer[s][t] for s in src]
        new = {}
        for comp in _compositions(y_ic[t], len(src)):
            lw = 0.0
            for k, r in zip(comp, rates):
                lw += k * math.log(r) - r - math.lgamma(k + 1) if k else -r
            for state, lp in states.items():
                nxt = list(state)
                for s, k in zip(src, comp):
                    nxt[s] += k
                key = tuple(nxt)
                val = lp + lw
                new[key] = np.logaddexp(new[key], val) if key in new else val
        states = new

    def log_binom(k, a, z):
        if z == 0.0:
            return 0.0 if k == 0 else -math.inf
        if z == 1.0:
            return 0.0 if k == a else -math.inf
        return (math.lgamma(a + 1) - math.lgamma(k + 1) - math.lgamma(a - k + 1)
                + k * math.log(z) + (a - k) * math.log1p(-z))

    def log_hosp_given(s, a):
        z = zh[s]
        y = y_h[s]
        terms = [log_binom(k, a, z) + float(poisson_logpmf(y - k, z * other[s]))
                 for k in range(min(a, y) + 1)]
        return float(logsumexp(terms))

    totals = []
    for state, lp in states.items():
        totals.append(lp + sum(log_hosp_given(s, state[s]) for s in range(T)))
    value = float(logsumexp(totals)) if totals else -math.inf
    return LogLikEstimate(value if math.isfinite(value) else -math.inf, "brute_force")


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

def loglik_hosp_icu(obs, params, xi0, cal, mode="joint", n_particles=2000, rng=None,
                    streams=("hospital", "icu"), brute_max_count=2_000_000) -> LogLikEstimate:
    """Hospital/ICU term under the requested estimator and active streams."""
    has_h, has_ic = "hospital" in streams, "icu" in streams
    if not (has_h and has_ic):
        ws = weekly_severity(xi0, params, cal)
        zh, zic = _detection(params, cal.n_weeks)
        value = 0.0
        if has_h:
            value += loglik_poisson_series(obs.y_h, zh * ws.hosp)
        if has_ic:
            value += loglik_poisson_series(obs.y_ic, zic * ws.icu)
        return LogLikEstimate(value, "exact_independent")
    if mode == "independent":
        return loglik_independent(obs, params, xi0, cal)
    if mode == "brute":
        return loglik_brute_force(obs, params, xi0, brute_max_count, cal)
    if rng is None:
        raise ValueError("Monte Carlo likelihood modes need an rng")
    if mode == "joint":
        return loglik_joint_mc(obs, params, xi0, n_particles, rng, cal)
    if mode == "joint-alt":
        return loglik_joint_mc_alt(obs, params, xi0, n_particles, rng, cal)
    raise ValueError(f"unknown likelihood mode {mode!r}")


def loglik_full(obs, params, cal: Calendar, streams=("hospital", "icu"), mode="joint",
                n_particles=2000, rng=None, xi0=None, brute_max_count=2_000_000) -> LogLikEstimate:
    """Sum of the active stream log-likelihoods.

    Streams are any of ``"hospital"``, ``"icu"``, ``"gp"`` and
    ``"virology"``. Hospital and ICU together use `mode` (joint particle
    estimator by default); GP consultations contribute a Poisson term with
    epidemic plus background rates under day-of-week detection; virology
    contributes Binomial positivity with the expected influenza share.
    """
    from .transmission import solve_transmission

    if xi0 is None:
        xi0 = solve_transmission(params, cal)
    value = 0.0
    hi = None
    if "hospital" in streams or "icu" in streams:
        hi = loglik_hosp_icu(obs, params, xi0, cal, mode, n_particles, rng, streams,
                             brute_max_count)
        value += hi.value
    if not math.isfinite(value):
        return LogLikEstimate(-math.inf, hi.kind, hi.n_particles)
    bg = BackgroundModel.from_params(params, enabled=True)
    if "gp" in streams:
        if obs.y_g is None:
            raise ValueError("GP stream active but no GP data")
        value += loglik_gp(obs.y_g, xi0, params, cal, bg)
    if "virology" in streams:
        if obs.virology is None:
            raise ValueError("virology stream active but no virology data")
        value += loglik_virology(obs.virology, xi0, params, cal, bg)
    if hi is None:
        return LogLikEstimate(value, "exact_independent")
    if not math.isfinite(value):
        return LogLikEstimate(-math.inf, hi.kind, hi.n_particles)
    # the closed-form terms rescale the natural-scale standard error
    shift = value - hi.value
    log_se = hi.log_mc_se + shift
    return LogLikEstimate(value, hi.kind, hi.n_particles,
                          math.exp(log_se) if math.isfinite(log_se) else 0.0, log_se)
