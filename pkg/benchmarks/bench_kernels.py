"""Time the compiled kernels against the numpy fallback.

Runs the transmission solver and both particle likelihood estimators on the
33-week large-dependence setting under each backend, checks that the two
backends agree to 1e-12 relative for the same seed, and prints a table.

    python benchmarks/bench_kernels.py [--particles 500] [--repeat 5]
"""
import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from epijoint import _core
from epijoint._core import _fallback
from epijoint.config import Calendar
from epijoint.likelihood import loglik_joint_mc, loglik_joint_mc_alt
from epijoint.simstudy import generate_scenario_data, large_scenario
from epijoint.transmission import solve_transmission

try:
    from epijoint._core import _kernels
except ImportError:  # extension not built
    _kernels = None

KERNELS = ("seir_solve", "joint_particles", "alt_particles")


@contextmanager
def backend(impl):
    saved = {k: getattr(_core, k) for k in KERNELS}
    for k in KERNELS:
        setattr(_core, k, getattr(impl, k))
    try:
        yield
    finally:
        for k, v in saved.items():
            setattr(_core, k, v)


def cases(n_particles):
    sc = large_scenario()
    p = sc.params()
    cal = Calendar.from_weeks(33)
    obs = generate_scenario_data(sc, n=1, seed=1)[0]
    xi0 = solve_transmission(p, cal)
    return {
        "seir_solve": lambda seed: solve_transmission(p, cal),
        f"joint_mc ({n_particles})": lambda seed: loglik_joint_mc(
            obs, p, xi0, n_particles, np.random.default_rng(seed), cal).value,
        f"joint_mc_alt ({n_particles})": lambda seed: loglik_joint_mc_alt(
            obs, p, xi0, n_particles, np.random.default_rng(seed), cal).value,
    }


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(0), number=1), 1e-6)))
    return min(timeit.repeat(lambda: fn(0), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = {"numpy": _fallback}
    if _kernels is not None:
        impls["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")
    rows = {}
    outs = {}
    for name, impl in impls.items():
        with backend(impl):
            for label, fn in cases(args.particles).items():
                rows.setdefault(label, {})[name] = best_of(fn, args.repeat)
                outs.setdefault(label, {})[name] = fn(123)
    print(f"{'kernel':<22}" + "".join(f"{n:>14}" for n in impls) + f"{'speed-up':>10}  agree")
    for label, t in rows.items():
        same = all(np.allclose(v, outs[label]["numpy"], rtol=1e-12, atol=0) for v in outs[label].values())
        ratio = t["numpy"] / t["cython"] if "cython" in t else float("nan")
        print(f"{label:<22}" + "".join(f"{t[n] * 1e3:>12.3f}ms" for n in impls)
              + f"{ratio:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
