# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: staged SEIR integration and particle weights.

Random draws go through numpy's C distribution functions in the same order
as the numpy fallback, so both backends produce identical particles.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport lgamma, log, log1p, INFINITY
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_poisson, random_multinomial, binomial_t)

cnp.import_array()

BACKEND = "cython"

cdef enum:
    MAX_COMP = 8


cdef inline void _deriv(const double *y, double beta, double se, double gi,
                        double inv_n, int m_e, int m_i, double *d) noexcept nogil:
    cdef int n_comp = 2 + m_e + m_i
    cdef int i0 = 1 + m_e
    cdef int r_idx = n_comp - 1
    cdef double itot = 0.0
    cdef int k
    for k in range(i0, r_idx):
        itot += y[k]
    cdef double inf = beta * y[0] * itot * inv_n
    d[0] = -inf
    d[1] = inf - se * y[1]
    for k in range(2, i0):
        d[k] = se * (y[k - 1] - y[k])
    d[i0] = se * y[i0 - 1] - gi * y[i0]
    for k in range(i0 + 1, r_idx):
        d[k] = gi * (y[k - 1] - y[k])
    d[r_idx] = gi * y[r_idx - 1]
    d[n_comp] = inf


def seir_solve(beta_daily, double sigma, double gamma, double n_pop,
               int m_e, int m_i, x0, int n_sub):
    cdef double[::1] beta = np.ascontiguousarray(beta_daily, dtype=np.float64)
    cdef Py_ssize_t n_days = beta.shape[0]
    cdef int n_comp = 2 + m_e + m_i
    cdef int nv = n_comp + 1
    if n_comp > MAX_COMP - 1:
        raise ValueError("too many stages")
    out_traj = np.empty((n_days + 1, n_comp))
    out_xi = np.empty(n_days)
    cdef double[:, ::1] traj = out_traj
    cdef double[::1] xi0 = out_xi
    cdef double y[MAX_COMP]
    cdef double tmp[MAX_COMP]
    cdef double k1[MAX_COMP]
    cdef double k2[MAX_COMP]
    cdef double k3[MAX_COMP]
    cdef double k4[MAX_COMP]
    cdef double h = 1.0 / n_sub
    cdef double se = m_e * sigma
    cdef double gi = m_i * gamma
    cdef double inv_n = 1.0 / n_pop
    cdef Py_ssize_t u
    cdef int j, sub
    cdef double b
    x0v = np.ascontiguousarray(x0, dtype=np.float64)
    for j in range(n_comp):
        y[j] = x0v[j]
        traj[0, j] = y[j]
    with nogil:
        for u in range(n_days):
            b = beta[u]
            y[n_comp] = 0.0
            for sub in range(n_sub):
                _deriv(y, b, se, gi, inv_n, m_e, m_i, k1)
                for j in range(nv):
                    tmp[j] = y[j] + 0.5 * h * k1[j]
                _deriv(tmp, b, se, gi, inv_n, m_e, m_i, k2)
                for j in range(nv):
                    tmp[j] = y[j] + 0.5 * h * k2[j]
                _deriv(tmp, b, se, gi, inv_n, m_e, m_i, k3)
                for j in range(nv):
                    tmp[j] = y[j] + h * k3[j]
                _deriv(tmp, b, se, gi, inv_n, m_e, m_i, k4)
                for j in range(nv):
                    y[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            xi0[u] = y[n_comp] if y[n_comp] > 0.0 else 0.0
            for j in range(n_comp):
                traj[u + 1, j] = y[j]
    return out_xi, out_traj


cdef inline double _binom_logpmf(int64_t y, int64_t x, double p) noexcept nogil:
    if y > x:
        return -INFINITY
    cdef double out = lgamma(x + 1.0) - lgamma(y + 1.0) - lgamma(x - y + 1.0)
    if y > 0:
        out += y * log(p)
    if x - y > 0:
        out += (x - y) * log1p(-p)
    return out


cdef bitgen_t* _bitgen(rng):
    capsule = rng.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


def joint_particles(y_h, y_ic, zeta_h, extra_ic_rate, split_p, split_len,
                    remainder_rate, Py_ssize_t n_particles, rng):
    cdef int64_t[::1] yh = np.ascontiguousarray(y_h, dtype=np.int64)
    cdef int64_t[::1] yic = np.ascontiguousarray(y_ic, dtype=np.int64)
    cdef double[::1] zh = np.ascontiguousarray(zeta_h, dtype=np.float64)
    cdef double[::1] extra = np.ascontiguousarray(extra_ic_rate, dtype=np.float64)
    cdef double[:, ::1] sp = np.ascontiguousarray(split_p, dtype=np.float64)
    cdef int64_t[::1] slen = np.ascontiguousarray(split_len, dtype=np.int64)
    cdef double[::1] rem = np.ascontiguousarray(remainder_rate, dtype=np.float64)
    cdef Py_ssize_t T = yh.shape[0]
    cdef Py_ssize_t K = sp.shape[1]
    cdef Py_ssize_t n = n_particles
    x_ic_arr = np.empty((n, T), dtype=np.int64)
    x_h_arr = np.zeros((n, T), dtype=np.int64)
    split_arr = np.zeros(max(K, 1), dtype=np.int64)
    logw_arr = np.zeros(n)
    cdef int64_t[:, ::1] x_ic = x_ic_arr
    cdef int64_t[:, ::1] x_h = x_h_arr
    cdef int64_t[::1] split = split_arr
    cdef double[::1] logw = logw_arr
    cdef Py_ssize_t i, t, k, L
    cdef binomial_t binom
    binom.has_binomial = 0
    cdef bitgen_t *bg = _bitgen(rng)
    with rng.bit_generator.lock:
        with nogil:
            for i in range(n):
                for t in range(T):
                    x_ic[i, t] = yic[t] + random_poisson(bg, extra[t])
            for t in range(T):
                L = slen[t]
                if L == 0:
                    continue
                for i in range(n):
                    for k in range(L):
                        split[k] = 0
                    random_multinomial(bg, x_ic[i, t], &split[0], &sp[t, 0], L, &binom)
                    for k in range(L):
                        x_h[i, t - k] += split[k]
            for i in range(n):
                for t in range(T):
                    x_h[i, t] += random_poisson(bg, rem[t])
            for i in range(n):
                for t in range(T):
                    logw[i] += _binom_logpmf(yh[t], x_h[i, t], zh[t])
    return logw_arr


def alt_particles(y_h, y_ic, zeta_ic, extra_h_rate, split_p, split_len,
                  Py_ssize_t n_particles, rng):
    cdef int64_t[::1] yh = np.ascontiguousarray(y_h, dtype=np.int64)
    cdef int64_t[::1] yic = np.ascontiguousarray(y_ic, dtype=np.int64)
    cdef double[::1] zic = np.ascontiguousarray(zeta_ic, dtype=np.float64)
    cdef double[::1] extra = np.ascontiguousarray(extra_h_rate, dtype=np.float64)
    cdef double[:, ::1] sp = np.ascontiguousarray(split_p, dtype=np.float64)
    cdef int64_t[::1] slen = np.ascontiguousarray(split_len, dtype=np.int64)
    cdef Py_ssize_t T = yh.shape[0]
    cdef Py_ssize_t K = sp.shape[1]
    cdef Py_ssize_t n = n_particles
    x_h_arr = np.empty((n, T), dtype=np.int64)
    x_ic_arr = np.zeros((n, T), dtype=np.int64)
    split_arr = np.zeros(max(K, 1), dtype=np.int64)
    logw_arr = np.zeros(n)
    cdef int64_t[:, ::1] x_h = x_h_arr
    cdef int64_t[:, ::1] x_ic = x_ic_arr
    cdef int64_t[::1] split = split_arr
    cdef double[::1] logw = logw_arr
    cdef Py_ssize_t i, s, k, L
    cdef binomial_t binom
    binom.has_binomial = 0
    cdef bitgen_t *bg = _bitgen(rng)
    with rng.bit_generator.lock:
        with nogil:
            for i in range(n):
                for s in range(T):
                    x_h[i, s] = yh[s] + random_poisson(bg, extra[s])
            for s in range(T):
                L = slen[s]
                if L == 0:
                    continue
                for i in range(n):
                    for k in range(L):
                        split[k] = 0
                    random_multinomial(bg, x_h[i, s], &split[0], &sp[s, 0], L, &binom)
                    for k in range(L - 1):
                        x_ic[i, s + k] += split[k]
            for i in range(n):
                for s in range(T):
                    logw[i] += _binom_logpmf(yic[s], x_ic[i, s], zic[s])
    return logw_arr
