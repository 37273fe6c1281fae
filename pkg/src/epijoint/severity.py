"""Stochastic severity cascade.

Infection cohorts are thinned with Poisson draws, moved to later severity
levels with Binomial draws and spread over event days with Multinomial
delay splits. The closed-form Poisson marginal rates of the same cascade
live here too, so forward simulation and likelihood share one definition
of the delay kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class DelayPmf:
    """Discretised, truncated delay distribution.

    ``probs[d]`` is the probability that the delay falls in
    ``[delta * d, delta * (d + 1))``; the support is ``0..D`` with ``D = len(probs) - 1``.
    """

    probs: np.ndarray
    delta: float = 1.0
    tail_mass: float = 0.0
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("delay pmf must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("delay pmf has negative entries")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"delay pmf sums to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def D(self) -> int:
        return self.probs.size - 1

    @classmethod
    def point_mass(cls, d: int = 0, delta: float = 1.0) -> "DelayPmf":
        p = np.zeros(d + 1)
        p[d] = 1.0
        return cls(p, delta, spec={"family": "point", "d": d})

    def __eq__(self, other):
        if not isinstance(other, DelayPmf):
            return NotImplemented
        return self.delta == other.delta and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.delta, self.probs.tobytes()))


def discretize_delay(family: str, params: dict, delta: float = 1.0,
                     tail_tol: float = 1e-6) -> DelayPmf:
    """Discretise a continuous delay distribution onto intervals of length `delta`.

    The support ends at the first index ``D`` whose interval leaves less than
    `tail_tol` of mass beyond it, i.e. ``1 - F(delta * (D + 1)) < tail_tol``.
    The truncated vector is renormalised.

    Parameters
    ----------
    family : {"exponential", "gamma"}
    params : dict
        ``{"rate": r}`` for the exponential, ``{"shape": k, "rate": r}`` for
        the gamma.
    """
    if not 0 < tail_tol <= 1e-3:
        raise ValueError("tail_tol must lie in (0, 1e-3]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    family = family.lower()
    if family in ("exponential", "exp"):
        rate = float(params["rate"])
        if not rate > 0:
            raise ValueError("exponential rate must be positive")
        dist = stats.expon(scale=1.0 / rate)
        spec = {"family": "exponential", "rate": rate}
    elif family == "gamma":
        shape, rate = float(params["shape"]), float(params["rate"])
        if not (shape > 0 and rate > 0):
            raise ValueError("gamma shape and rate must be positive")
        dist = stats.gamma(shape, scale=1.0 / rate)
        spec = {"family": "gamma", "shape": shape, "rate": rate}
    else:
        raise ValueError(f"unknown delay family {family!r}")

    # survival function avoids the 1 - F cancellation deep in the tail
    D = 0
    while dist.sf(delta * (D + 1)) >= tail_tol:
        D += 1
        if D > 100_000:
            raise ValueError("delay distribution too long-tailed to truncate")
    edges = delta * np.arange(D + 2)
    cdf = dist.cdf(edges)
    probs = np.diff(cdf)
    tail = float(dist.sf(edges[-1]))
    probs = probs / probs.sum()
    spec["delta"] = delta
    spec["tail_tol"] = tail_tol
    return DelayPmf(probs, delta, tail, spec)


def sample_cohort_poisson(xi0, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Independent ``Poisson(theta * xi0[u])`` draws, one per day."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    lam = theta * np.asarray(xi0, dtype=float)
    return rng.poisson(lam).astype(np.int64)


def sample_binomial_transition(x, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Independent ``Binomial(x[t], theta)`` draws."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    return rng.binomial(np.asarray(x, dtype=np.int64), theta).astype(np.int64)


def split_and_convolve(cohort, pmf: DelayPmf, rng: np.random.Generator,
                       return_overflow: bool = False):
    """Spread each cohort over its event days with a Multinomial delay split.

    Returns the per-day event counts on the same horizon as `cohort`. Events
    landing after the horizon go to an overflow total, so that
    ``out.sum() + overflow == cohort.sum()`` holds exactly.
    """
    cohort = np.asarray(cohort, dtype=np.int64)
    if np.any(cohort < 0):
        raise ValueError("cohort counts must be nonnegative")
    n = cohort.size
    out = np.zeros(n, dtype=np.int64)
    overflow = 0
    p = pmf.probs
    width = p.size
    for t in np.flatnonzero(cohort):
        split = rng.multinomial(cohort[t], p)
        stop = min(n, t + width)
        out[t:stop] += split[:stop - t]
        overflow += int(split[stop - t:].sum())
    if return_overflow:
        return out, overflow
    return out


def split_and_convolve_batch(cohorts, pmf: DelayPmf, rng: np.random.Generator):
    """Vectorised `split_and_convolve` over a ``(reps, n)`` batch of cohorts.

    Draw order differs from the single-path routine; use it for Monte Carlo
    studies, not for reproducing a particular single path.
    """
    cohorts = np.asarray(cohorts, dtype=np.int64)
    reps, n = cohorts.shape
    out = np.zeros((reps, n), dtype=np.int64)
    p = pmf.probs
    width = p.size
    for t in range(n):
        col = cohorts[:, t]
        if not col.any():
            continue
        split = rng.multinomial(col, p)
        stop = min(n, t + width)
        out[:, t:stop] += split[:, :stop - t]
    return out


def convolve_rates(rate, pmf: DelayPmf) -> np.ndarray:
    """Expected event counts per day: ``sum_d rate[u - d] * f_d`` on the input horizon."""
    rate = np.asarray(rate, dtype=float)
    return np.convolve(rate, pmf.probs)[:rate.size]


def marginal_rates(xi0, params):
    """Poisson marginal rates of hospital, ICU and GP-attributable events by day.

    ``lambda_h[u] = theta_h * sum_d xi0[u-d] f^H_d``; the ICU rate applies the
    hospital-to-ICU delay to the hospital rate (a full double convolution) and
    scales by ``theta_ic``; the GP rate uses ``theta_f`` and its own delay.
    """
    xi0 = np.asarray(xi0, dtype=float)
    lam_h = params.theta_h * convolve_rates(xi0, params.delay_inf_to_hosp)
    lam_ic = params.theta_ic * convolve_rates(lam_h, params.delay_hosp_to_ic)
    lam_f = params.theta_f * convolve_rates(xi0, params.delay_inf_to_gp)
    return lam_h, lam_ic, lam_f


@dataclass
class LatentPath:
    """One realisation of the severity layer on the daily grid."""

    x0h: np.ndarray
    xh: np.ndarray
    xh_ic_cohort: np.ndarray
    xic: np.ndarray
    x0f: np.ndarray
    xf: np.ndarray
    overflow: dict = field(default_factory=dict)

    def as_columns(self) -> dict:
        return {"x0h": self.x0h, "xh": self.xh, "xh_ic_cohort": self.xh_ic_cohort,
                "xic": self.xic, "x0f": self.x0f, "xf": self.xf}


def simulate_latent_path(xi0, params, rng: np.random.Generator) -> LatentPath:
    """Forward-simulate the full severity cascade for one season.

    ICU-bound cohorts are drawn from the convolved hospital admissions, so the
    ICU series depends on the realised hospital path.
    """
    x0h = sample_cohort_poisson(xi0, params.theta_h, rng)
    xh, over_h = split_and_convolve(x0h, params.delay_inf_to_hosp, rng, return_overflow=True)
    xh_ic = sample_binomial_transition(xh, params.theta_ic, rng)
    xic, over_ic = split_and_convolve(xh_ic, params.delay_hosp_to_ic, rng, return_overflow=True)
    x0f = sample_cohort_poisson(xi0, params.theta_f, rng)
    xf, over_f = split_and_convolve(x0f, params.delay_inf_to_gp, rng, return_overflow=True)
    return LatentPath(x0h, xh, xh_ic, xic, x0f, xf,
                      {"xh": over_h, "xic": over_ic, "xf": over_f})


def poisson_upper(rate: float, eps: float = 1e-14) -> int:
    """Smallest k with ``P(Pois(rate) > k) < eps``."""
    if rate <= 0:
        return 0
    k = int(stats.poisson.isf(eps, rate))
    while stats.poisson.sf(k, rate) >= eps:
        k += 1
    return max(k, int(math.ceil(rate)))
