"""Observation layer: Binomial detection, weekly aggregation, GP and virology streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from ._core import binom_logpmf
from .config import Calendar
from .data import ObservationSet
from .severity import convolve_rates


@dataclass(frozen=True)
class BackgroundModel:
    """Weekly non-influenza ILI rate ``exp(a0 + a1 sin(2 pi w / P) + a2 cos(2 pi w / P))``.

    ``w`` is the calendar week plus `week_offset`. A disabled model has rate zero.
    """

    a0: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    period: float = 52.0
    week_offset: int = 0
    enabled: bool = True

    @classmethod
    def from_params(cls, params, enabled: bool = True) -> "BackgroundModel":
        return cls(params.bg_a0, params.bg_a1, params.bg_a2, params.bg_period,
                   params.bg_week_offset, enabled)

    def weekly_rate(self, n_weeks: int) -> np.ndarray:
        if not self.enabled:
            return np.zeros(n_weeks)
        w = 2.0 * np.pi * (np.arange(n_weeks) + self.week_offset) / self.period
        return np.exp(self.a0 + self.a1 * np.sin(w) + self.a2 * np.cos(w))

    def daily_rate(self, cal: Calendar) -> np.ndarray:
        return self.weekly_rate(cal.n_weeks)[cal.day_to_week] / 7.0


@dataclass(frozen=True)
class DetectionSchedule:
    zeta_h: np.ndarray
    zeta_ic: np.ndarray
    zeta_g_base: float = 1.0
    dow_effect: tuple = (1.0,) * 7

    @classmethod
    def from_params(cls, params, cal: Calendar) -> "DetectionSchedule":
        return cls(params.zeta_h_weekly(cal.n_weeks), params.zeta_ic_weekly(cal.n_weeks),
                   params.zeta_g, params.dow_effect)

    def zeta_g(self, cal: Calendar) -> np.ndarray:
        z = self.zeta_g_base * np.asarray(self.dow_effect)[cal.day_of_week]
        if np.any(z > 1) or np.any(z < 0):
            raise ValueError("GP detection probability outside [0, 1]")
        return z


def weekly_aggregate(daily, cal: Calendar) -> np.ndarray:
    """Sum a daily series into calendar weeks."""
    daily = np.asarray(daily)
    if daily.shape[-1] != cal.n_days:
        raise ValueError(f"daily series has {daily.shape[-1]} days, calendar has {cal.n_days}")
    return np.add.reduceat(daily, np.arange(0, cal.n_days, 7), axis=-1)


def virology_probability(lam_f_daily, bg: BackgroundModel, cal: Calendar) -> np.ndarray:
    """Weekly share of ILI consultations caused by influenza, from expected rates."""
    epi = weekly_aggregate(lam_f_daily, cal)
    back = weekly_aggregate(bg.daily_rate(cal), cal)
    tot = epi + back
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tot > 0, epi / tot, 0.0)
    return np.clip(p, 0.0, 1.0)


def simulate_observations(path, sched: DetectionSchedule, bg: BackgroundModel,
                          cal: Calendar, rng: np.random.Generator,
                          lam_f=None, tested=None, streams=("hospital", "icu")) -> ObservationSet:
    """Draw one observed dataset from a latent severity path.

    Hospital and ICU admissions are aggregated to weeks before Binomial
    detection. When ``"gp"`` is in `streams`, daily background consultations
    ``Pois(b_t / 7)`` are added to the influenza consultations and detected
    with the day-of-week schedule. When ``"virology"`` is in `streams`,
    positives are ``Bin(tested_t, p_t)`` with ``p_t`` from the expected rates
    `lam_f` (required in that case).
    """
    xh_w = weekly_aggregate(np.asarray(path.xh), cal)
    xic_w = weekly_aggregate(np.asarray(path.xic), cal)
    y_h = rng.binomial(xh_w, sched.zeta_h)
    y_ic = rng.binomial(xic_w, sched.zeta_ic)
    y_g = None
    vir = None
    if "gp" in streams:
        xb = rng.poisson(bg.daily_rate(cal))
        y_g = rng.binomial(np.asarray(path.xf) + xb, sched.zeta_g(cal))
    if "virology" in streams:
        if lam_f is None:
            raise ValueError("virology simulation needs the expected GP rates")
        p = virology_probability(lam_f, bg, cal)
        n_tested = np.broadcast_to(np.asarray(100 if tested is None else tested), (cal.n_weeks,))
        pos = rng.binomial(n_tested, p)
        vir = np.column_stack([np.arange(cal.n_weeks), n_tested, pos])
    return ObservationSet(y_h, y_ic, y_g, vir)


def loglik_binomial_detection(y, x, zeta) -> float:
    """``sum_t log Bin(y_t; x_t, zeta_t)``; ``-inf`` if any ``y_t > x_t``."""
    y = np.asarray(y)
    x = np.asarray(x)
    if np.any(y > x):
        return -np.inf
    return float(np.sum(binom_logpmf(y, x, zeta)))


def poisson_logpmf(y, lam) -> np.ndarray:
    """Elementwise Poisson log-pmf with ``log Pois(0; 0) = 0`` and ``log Pois(y>0; 0) = -inf``."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(y, lam) - lam - gammaln(y + 1)
    return np.where((lam == 0) & (y > 0), -np.inf, out)


def loglik_poisson_series(y, lam) -> float:
    """``sum_t [y_t log lam_t - lam_t - log y_t!]``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("Poisson rates must be nonnegative")
    return float(np.sum(poisson_logpmf(y, lam)))


def gp_rates(xi0, params, cal: Calendar, bg: BackgroundModel) -> np.ndarray:
    """Expected detected GP consultations per day."""
    lam_f = params.theta_f * convolve_rates(xi0, params.delay_inf_to_gp)
    return params.zeta_g_daily(cal) * (lam_f + bg.daily_rate(cal))


def loglik_gp(y_g, xi0, params, cal: Calendar, bg: BackgroundModel) -> float:
    return loglik_poisson_series(y_g, gp_rates(xi0, params, cal, bg))


def loglik_virology(virology, xi0, params, cal: Calendar, bg: BackgroundModel) -> float:
    lam_f = params.theta_f * convolve_rates(xi0, params.delay_inf_to_gp)
    p = virology_probability(lam_f, bg, cal)
    weeks, tested, pos = virology.T
    return loglik_binomial_detection(pos, tested, p[weeks])
