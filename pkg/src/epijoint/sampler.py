"""Pseudo-marginal Metropolis-Hastings (GIMH and MCWM).

Free parameters move by a Gaussian random walk on an unconstrained scale
chosen from each prior's support (log for positive parameters, scaled logit
for bounded ones, identity on the real line). The acceptance ratio carries
the Jacobian of that transform.

Two random streams are spawned from the seed: one drives proposals and
accept/reject uniforms (one ``standard_normal(d)`` then one ``random()`` per
iteration), the other feeds the likelihood estimator. A deterministic
likelihood therefore leaves the proposal stream untouched, and GIMH, MCWM and
plain MH produce the same trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

from .likelihood import LogLikEstimate, loglik_full
from .priors import Prior

log = logging.getLogger(__name__)


class InitializationError(RuntimeError):
    """The likelihood estimate at the initial point stayed at -inf."""


class EmptyChainError(ValueError):
    pass


@dataclass(frozen=True)
class ParamTransform:
    kind: str
    lo: float = 0.0
    hi: float = 1.0

    @classmethod
    def for_prior(cls, prior: Prior) -> "ParamTransform":
        if prior.dist in ("gamma", "lognormal"):
            return cls("log")
        if prior.dist == "beta":
            return cls("logit", 0.0, 1.0)
        if prior.dist == "uniform":
            return cls("logit", prior.a, prior.b)
        return cls("identity")

    def forward(self, x: float) -> float:
        if self.kind == "log":
            return math.log(x)
        if self.kind == "logit":
            return float(logit((x - self.lo) / (self.hi - self.lo)))
        return float(x)

    def inverse(self, phi: float) -> float:
        if self.kind == "log":
            return math.exp(phi)
        if self.kind == "logit":
            return self.lo + (self.hi - self.lo) * float(expit(phi))
        return float(phi)

    def log_jacobian(self, phi: float) -> float:
        """``log |dx / dphi|`` at `phi`."""
        if self.kind == "log":
            return phi
        if self.kind == "logit":
            # log expit(phi) + log expit(-phi), computed stably
            return math.log(self.hi - self.lo) - _softplus(-phi) - _softplus(phi)
        return 0.0


def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@dataclass
class MCMCSettings:
    algorithm: str = "gimh"
    n_iter: int = 10_000
    n_burnin: int = 1_000
    proposal_cov: np.ndarray | None = None
    adapt: bool = True
    adapt_cov: bool = False
    target_accept: float = 0.234
    n_particles: int = 2000
    seed: int = 0
    max_init_retries: int = 10
    progress_every: int = 0

    def __post_init__(self):
        self.algorithm = self.algorithm.lower()
        if self.algorithm not in ("gimh", "mcwm"):
            raise ValueError("algorithm must be 'gimh' or 'mcwm'")
        if not self.n_iter > self.n_burnin >= 0:
            raise ValueError("need n_iter > n_burnin >= 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")


@dataclass
class ChainRecord:
    iteration: int
    params: dict
    loglik: float
    kind: str
    n_particles: int
    mc_se: float
    log_prior: float
    accepted: bool
    burnin: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"iteration": self.iteration, "params": dict(self.params), "loglik": self.loglik,
             "kind": self.kind, "n_particles": self.n_particles, "mc_se": self.mc_se,
             "log_prior": self.log_prior, "accepted": self.accepted, "burnin": self.burnin}
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainRecord":
        return cls(d["iteration"], dict(d["params"]), float(d["loglik"]), d["kind"],
                   int(d["n_particles"]), float(d["mc_se"]), float(d["log_prior"]),
                   bool(d["accepted"]), bool(d["burnin"]), d.get("extra", {}))


def accept_step(log_alpha: float, u: float) -> bool:
    """Metropolis-Hastings decision for a uniform draw `u` in [0, 1)."""
    if math.isnan(log_alpha):
        return False
    if log_alpha >= 0.0:
        return True
    return u < math.exp(log_alpha)


def _chol(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.allclose(cov, cov.T):
        raise ValueError("proposal covariance must be symmetric")
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, v = linalg.eigh(cov)
        if np.any(w < -1e-12 * max(1.0, abs(w).max())):
            raise ValueError("proposal covariance must be positive semi-definite") from None
        return v * np.sqrt(np.clip(w, 0.0, None))


def _estimate_ok(est) -> bool:
    return est is not None and math.isfinite(est.value)


def sample(loglik: Callable[[dict, np.random.Generator], LogLikEstimate],
           priors: dict, init: dict, settings: MCMCSettings,
           on_record: Callable[[ChainRecord], None] | None = None) -> list[ChainRecord]:
    """Run one pseudo-marginal MH chain.

    Parameters
    ----------
    loglik : callable
        ``loglik(values, rng)`` returns a LogLikEstimate for the free
        parameter values in dict `values`; an estimate of ``-inf`` rejects.
    priors : dict
        Prior for every free parameter, in sampling order.
    init : dict
        Starting values; must have positive prior density.
    on_record : callable, optional
        Called with each ChainRecord as it is produced.
    """
    names = [n for n, p in priors.items() if not p.is_fixed]
    d = len(names)
    prior_list = [priors[n] for n in names]
    transforms = [ParamTransform.for_prior(p) for p in prior_list]

    ss = np.random.SeedSequence(settings.seed)
    prop_ss, lik_ss = ss.spawn(2)
    rng_p = np.random.default_rng(prop_ss)
    rng_l = np.random.default_rng(lik_ss)

    cov = settings.proposal_cov
    if cov is None:
        cov = np.eye(d) * 0.1 ** 2
    L = _chol(cov) if d else np.zeros((0, 0))
    log_scale = 0.0

    x = np.array([float(init[n]) for n in names])
    phi = np.array([t.forward(v) for t, v in zip(transforms, x)])

    def log_prior(xv):
        return sum(p.logpdf(v) for p, v in zip(prior_list, xv))

    def log_jac(ph):
        return sum(t.log_jacobian(v) for t, v in zip(transforms, ph))

    def values(xv):
        return dict(zip(names, (float(v) for v in xv)))

    lp = log_prior(x)
    if not math.isfinite(lp):
        raise InitializationError("initial point has zero prior density")
    cur = None
    for _ in range(max(1, settings.max_init_retries)):
        cur = loglik(values(x), rng_l)
        if _estimate_ok(cur):
            break
    if not _estimate_ok(cur):
        raise InitializationError(
            f"likelihood estimate is -inf at the initial point after "
            f"{settings.max_init_retries} attempts")
    lj = log_jac(phi)

    records = []
    burn_phis = []
    n_acc = 0
    for it in range(settings.n_iter):
        z = rng_p.standard_normal(d)
        u = rng_p.random()
        phi_new = phi + math.exp(log_scale) * (L @ z)
        x_new = np.array([t.inverse(v) for t, v in zip(transforms, phi_new)])
        lp_new = log_prior(x_new)
        new = None
        if math.isfinite(lp_new):
            if settings.algorithm == "mcwm":
                cur = loglik(values(x), rng_l)
            new = loglik(values(x_new), rng_l)
        if new is not None and math.isfinite(new.value):
            lj_new = log_jac(phi_new)
            if math.isfinite(cur.value):
                log_alpha = (new.value + lp_new + lj_new) - (cur.value + lp + lj)
            else:
                log_alpha = math.inf
        else:
            log_alpha = -math.inf
        accepted = accept_step(log_alpha, u)
        if accepted:
            phi, x, lp, lj, cur = phi_new, x_new, lp_new, lj_new, new
            n_acc += 1
        in_burnin = it < settings.n_burnin
        if in_burnin and settings.adapt:
            a = math.exp(min(0.0, log_alpha)) if not math.isnan(log_alpha) else 0.0
            log_scale += (it + 1) ** -0.6 * (a - settings.target_accept)
            if settings.adapt_cov and d:
                burn_phis.append(phi.copy())
                if it + 1 == settings.n_burnin // 2 and len(burn_phis) > 10 * d:
                    emp = np.cov(np.array(burn_phis).T).reshape(d, d)
                    L = _chol(emp * 2.38 ** 2 / d + 1e-10 * np.eye(d))
                    log_scale = 0.0
        rec = ChainRecord(it, values(x), float(cur.value), cur.kind, cur.n_particles,
                          float(cur.mc_se), float(lp), bool(accepted), in_burnin)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        if settings.progress_every and (it + 1) % settings.progress_every == 0:
            log.info("iter %d/%d  accept %.3f  loglik %.3f  scale %.3g",
                     it + 1, settings.n_iter, n_acc / (it + 1), cur.value, math.exp(log_scale))
    return records


def make_loglik(obs, cal, base_params, lik_mode="joint", streams=("hospital", "icu"),
                n_particles=2000, brute_max_count=2_000_000):
    """Build ``loglik(values, rng)`` for the epidemic model around `base_params`.

    The transmission solution is cached on the transmission parameters, so
    refreshing an estimate at an unchanged point reuses it.
    """
    from .transmission import solve_transmission

    trans_keys = ("beta", "pi", "iota", "sigma", "gamma", "kappa")
    cache = {}

    def loglik(values, rng):
        params = base_params.replace(**values)
        if not params.is_valid():
            return LogLikEstimate(-math.inf, _kind(lik_mode), n_particles)
        key = tuple(getattr(params, k) for k in trans_keys)
        xi0 = cache.get(key)
        if xi0 is None:
            xi0 = solve_transmission(params, cal)
            if len(cache) > 8:
                cache.clear()
            cache[key] = xi0
        return loglik_full(obs, params, cal, streams, lik_mode, n_particles, rng,
                           xi0=xi0, brute_max_count=brute_max_count)

    return loglik


def _kind(mode):
    return {"joint": "mc_joint_icu_first", "joint-alt": "mc_joint_hosp_first",
            "brute": "brute_force"}.get(mode, "exact_independent")


def run_chain(obs, cal, settings: MCMCSettings, priors: dict, init, lik_mode="joint",
              streams=("hospital", "icu"), on_record=None):
    """Pseudo-marginal MH over the free parameters of ParamSet `init`."""
    free = {k: p for k, p in priors.items() if not p.is_fixed}
    loglik = make_loglik(obs, cal, init, lik_mode, streams, settings.n_particles)
    start = {k: float(getattr(init, k)) for k in free}
    return sample(loglik, free, start, settings, on_record)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def effective_sample_size(x) -> float:
    """ESS from Geyer's initial monotone positive-sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc.dot(xc) / n
    if var == 0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    rho = acov / var
    pair = rho[:-1:2] + rho[1::2]
    # truncate at the first non-positive pair, then enforce monotonicity
    neg = np.flatnonzero(pair <= 0)
    k = neg[0] if neg.size else pair.size
    pair = np.minimum.accumulate(pair[:k])
    tau = -1.0 + 2.0 * pair.sum()
    return float(n / max(tau, 1e-12))


SUMMARY_FIELDS = ("mean", "var", "median", "q2.5", "q97.5", "r95", "ess", "accept_rate")


def summarize_chain(records, param_names=None, include_burnin: bool = False) -> dict:
    """Posterior summaries per parameter from the post-burn-in records.

    Returns ``{name: {mean, var, median, q2.5, q97.5, r95, ess, accept_rate}}``
    where ``r95`` is the width of the equal-tailed 95% credible interval.
    """
    recs = [r for r in records if include_burnin or not r.burnin]
    if len(recs) < 2:
        raise EmptyChainError("need at least two post-burn-in records")
    names = param_names or list(recs[0].params)
    acc = float(np.mean([r.accepted for r in recs]))
    out = {}
    for name in names:
        v = np.array([r.params[name] for r in recs], dtype=float)
        q = np.quantile(v, [0.025, 0.5, 0.975])
        out[name] = {"mean": float(v.mean()), "var": float(v.var(ddof=1)),
                     "median": float(q[1]), "q2.5": float(q[0]), "q97.5": float(q[2]),
                     "r95": float(q[2] - q[0]), "ess": effective_sample_size(v),
                     "accept_rate": acc}
    return out


def chain_array(records, names, include_burnin=False) -> np.ndarray:
    recs = [r for r in records if include_burnin or not r.burnin]
    return np.array([[r.params[n] for n in names] for r in recs], dtype=float)
