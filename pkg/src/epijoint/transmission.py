"""Deterministic staged SEIR transmission on a daily grid."""
from __future__ import annotations

import math

import numpy as np

from . import _core
from .config import Calendar


def initial_state(params, stages=None) -> np.ndarray:
    """Initial compartments ``[s, e_1.., i_1.., r]``.

    The seeded mass ``iota * N`` is split equally over all exposed and
    infectious stages unless ``params.init_weights`` says otherwise.
    """
    m_e, m_i = stages or params.stages
    n = params.n_pop
    seed = params.iota * n
    w = np.ones(m_e + m_i) if params.init_weights is None else np.asarray(params.init_weights, float)
    w = w / w.sum() if w.sum() > 0 else w
    x = np.empty(2 + m_e + m_i)
    x[0] = (1.0 - params.pi - params.iota) * n
    x[1:1 + m_e + m_i] = seed * w
    x[-1] = params.pi * n
    return x


def daily_beta(params, cal: Calendar) -> np.ndarray:
    """Transmission rate per day: ``beta * kappa`` inside closure windows, else ``beta``."""
    b = np.full(cal.n_days, float(params.beta))
    b[cal.closure_mask()] *= params.kappa
    return b


def substeps(params, stages) -> int:
    m_e, m_i = stages
    fastest = max(params.beta, params.beta * params.kappa, m_e * params.sigma, m_i * params.gamma)
    return max(1, math.ceil(2.0 * fastest))


def solve_transmission(params, cal: Calendar, stages=None, return_states: bool = False):
    """Daily new infections ``xi0`` of the staged SEIR model.

    The system is integrated with classical RK4 using enough sub-steps per
    day that every rate times the sub-step is at most 1/2; ``xi0[u]`` is the
    exact integral of the S to E flow over day ``u`` under that scheme.

    Parameters
    ----------
    params : ParamSet
    cal : Calendar
    stages : (m_E, m_I), optional
        Overrides ``params.stages``; each must be 1 or 2.
    return_states : bool
        Also return the ``(n_days + 1, n_comp)`` compartment trajectory.
    """
    stages = tuple(stages or params.stages)
    if any(m not in (1, 2) for m in stages):
        raise ValueError("stage counts must be 1 or 2")
    x0 = initial_state(params, stages)
    xi0, states = _core.seir_solve(daily_beta(params, cal), float(params.sigma),
                                   float(params.gamma), float(params.n_pop),
                                   stages[0], stages[1], x0, substeps(params, stages))
    if return_states:
        return xi0, states
    return xi0


def reproduction_number(params) -> float:
    """Effective initial reproduction number ``beta / gamma * (1 - pi)``."""
    return params.beta / params.gamma * (1.0 - params.pi)
