"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` draw-for-draw: both routes consume the
generator in the same order through the same numpy sampling routines, so a
given seed yields the same particles whichever backend is active.
"""
import numpy as np
from scipy.special import gammaln, xlog1py, xlogy


def seir_solve(beta_daily, sigma, gamma, n_pop, m_e, m_i, x0, n_sub):
    """RK4 integration of the staged SEIR system, reported on the daily grid.

    State layout is ``[s, e_1..e_mE, i_1..i_mI, r]``. Returns the new
    infections per day and the state at every day boundary.
    """
    beta_daily = np.asarray(beta_daily, dtype=float)
    n_days = beta_daily.size
    n_comp = 2 + m_e + m_i
    x = [float(v) for v in x0]
    traj = np.empty((n_days + 1, n_comp))
    traj[0] = x
    xi0 = np.empty(n_days)
    h = 1.0 / n_sub
    se = m_e * sigma
    gi = m_i * gamma
    inv_n = 1.0 / n_pop
    i0 = 1 + m_e
    r_idx = n_comp - 1

    def deriv(y, beta):
        inf = beta * y[0] * sum(y[i0:r_idx]) * inv_n
        d = [0.0] * (n_comp + 1)
        d[0] = -inf
        d[1] = inf - se * y[1]
        for k in range(2, i0):
            d[k] = se * (y[k - 1] - y[k])
        d[i0] = se * y[i0 - 1] - gi * y[i0]
        for k in range(i0 + 1, r_idx):
            d[k] = gi * (y[k - 1] - y[k])
        d[r_idx] = gi * y[r_idx - 1]
        d[n_comp] = inf
        return d

    for u in range(n_days):
        beta = beta_daily[u]
        y = x + [0.0]
        for _ in range(n_sub):
            k1 = deriv(y, beta)
            k2 = deriv([a + 0.5 * h * b for a, b in zip(y, k1)], beta)
            k3 = deriv([a + 0.5 * h * b for a, b in zip(y, k2)], beta)
            k4 = deriv([a + h * b for a, b in zip(y, k3)], beta)
            y = [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        x = y[:n_comp]
        xi0[u] = max(y[n_comp], 0.0)
        traj[u + 1] = x
    return xi0, traj


def binom_logpmf(y, x, p):
    """Elementwise Binomial log-pmf; ``-inf`` where ``y > x``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (gammaln(x + 1) - gammaln(y + 1) - gammaln(x - y + 1)
               + xlogy(y, p) + xlog1py(x - y, -p))
    return np.where(y > x, -np.inf, out)


def joint_particles(y_h, y_ic, zeta_h, extra_ic_rate, split_p, split_len,
                    remainder_rate, n_particles, rng):
    """Particle weights for the ICU-first joint estimator.

    Parameters
    ----------
    y_h, y_ic : int arrays (T,)
    zeta_h : float array (T,)
        Hospital detection probability per week.
    extra_ic_rate : float array (T,)
        Rate of undetected ICU admissions per week.
    split_p : float array (T, K)
        ``split_p[t, k]`` is the probability that an ICU admission in week
        ``t`` was admitted to hospital in week ``t - k``.
    split_len : int array (T,)
        Number of categories used for week ``t`` (zero skips the split).
    remainder_rate : float array (T,)
        Rate of hospital admissions in week ``s`` not entering ICU in the window.

    Returns
    -------
    logw : float array (n_particles,)
    """
    T = y_h.size
    n = n_particles
    x_ic = y_ic[None, :] + rng.poisson(extra_ic_rate, size=(n, T))
    x_h = np.zeros((n, T), dtype=np.int64)
    for t in range(T):
        L = split_len[t]
        if L == 0:
            continue
        split = rng.multinomial(x_ic[:, t], split_p[t, :L])
        # category k maps to hospital week t - k
        x_h[:, t - L + 1:t + 1] += split[:, ::-1]
    x_h += rng.poisson(remainder_rate, size=(n, T))
    return binom_logpmf(y_h[None, :], x_h, zeta_h[None, :]).sum(axis=1)


def alt_particles(y_h, y_ic, zeta_ic, extra_h_rate, split_p, split_len,
                  n_particles, rng):
    """Particle weights for the hospital-first joint estimator.

    ``split_p[s, k]`` for ``k < split_len[s] - 1`` is the probability that a
    week-``s`` hospital admission enters ICU in week ``s + k``; the last used
    category collects admissions that never reach ICU inside the window.
    """
    T = y_h.size
    n = n_particles
    x_h = y_h[None, :] + rng.poisson(extra_h_rate, size=(n, T))
    x_ic = np.zeros((n, T), dtype=np.int64)
    for s in range(T):
        L = split_len[s]
        if L == 0:
            continue
        split = rng.multinomial(x_h[:, s], split_p[s, :L])
        x_ic[:, s:s + L - 1] += split[:, :L - 1]
    return binom_logpmf(y_ic[None, :], x_ic, np.asarray(zeta_ic)[None, :]).sum(axis=1)


BACKEND = "python"
