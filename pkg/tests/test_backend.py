"""The compiled kernels and the numpy fallback must agree draw for draw."""
import numpy as np
import pytest

from epijoint import _core
from epijoint._core import _fallback
from epijoint.config import Calendar, ParamSet
from epijoint.likelihood import hosp_first_split, icu_first_split, weekly_severity
from epijoint.simstudy import generate_scenario_data, large_scenario
from epijoint.transmission import daily_beta, initial_state, substeps

kernels = pytest.importorskip("epijoint._core._kernels")


@pytest.fixture(scope="module")
def problem():
    sc = large_scenario()
    p = sc.params()
    cal = Calendar.from_weeks(33)
    x0 = initial_state(p)
    args = (daily_beta(p, cal), p.sigma, p.gamma, float(p.n_pop), 1, 1, x0, substeps(p, (1, 1)))
    xi0, _ = _fallback.seir_solve(*args)
    ws = weekly_severity(xi0, p, cal)
    obs = generate_scenario_data(sc, n=1, seed=0)[0]
    return p, cal, ws, obs


def test_backend_selected():
    assert _core.BACKEND in ("cython", "python")


@pytest.mark.parametrize("stages", [(1, 1), (2, 2), (1, 2)])
def test_seir_identical(stages):
    p = ParamSet(beta=0.9, kappa=0.6, iota=0.001)
    cal = Calendar.from_weeks(20, closure_windows=[(40, 60)])
    x0 = initial_state(p, stages)
    args = (daily_beta(p, cal), p.sigma, p.gamma, float(p.n_pop), *stages, x0,
            substeps(p, stages))
    a, sa = _fallback.seir_solve(*args)
    b, sb = kernels.seir_solve(*args)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)
    assert np.allclose(sa, sb, rtol=1e-13, atol=1e-10)


def test_joint_particles_identical(problem):
    p, cal, ws, obs = problem
    zh, zic = p.zeta_h_weekly(33), p.zeta_ic_weekly(33)
    sp, sl = icu_first_split(ws)
    args = (obs.y_h, obs.y_ic, zh, (1 - zic) * ws.icu, sp, sl, ws.remainder, 300)
    a = _fallback.joint_particles(*args, np.random.default_rng(1))
    b = kernels.joint_particles(*args, np.random.default_rng(1))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.array_equal(np.isfinite(a), np.isfinite(b))


def test_alt_particles_identical(problem):
    p, cal, ws, obs = problem
    zh, zic = p.zeta_h_weekly(33), p.zeta_ic_weekly(33)
    sp, sl = hosp_first_split(ws)
    # a smaller ICU stream keeps some particles alive
    y_ic = obs.y_ic // 20
    args = (obs.y_h, y_ic, zic, (1 - zh) * ws.hosp, sp, sl, 300)
    a = _fallback.alt_particles(*args, np.random.default_rng(2))
    b = kernels.alt_particles(*args, np.random.default_rng(2))
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    fin = np.isfinite(a)
    assert np.allclose(a[fin], b[fin], rtol=1e-12, atol=1e-12)


def test_generator_state_advances_equally(problem):
    p, cal, ws, obs = problem
    zh, zic = p.zeta_h_weekly(33), p.zeta_ic_weekly(33)
    sp, sl = icu_first_split(ws)
    args = (obs.y_h, obs.y_ic, zh, (1 - zic) * ws.icu, sp, sl, ws.remainder, 50)
    ra, rb = np.random.default_rng(3), np.random.default_rng(3)
    _fallback.joint_particles(*args, ra)
    kernels.joint_particles(*args, rb)
    assert ra.random() == rb.random()
