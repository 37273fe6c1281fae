"""Hot numerical kernels.

The compiled extension ``_kernels`` is used when it has been built; the
numpy implementation in ``_fallback`` is used otherwise, or when the
environment variable ``EPIJOINT_PURE_PYTHON`` is set to a non-empty value.
Both expose ``seir_solve``, ``joint_particles`` and ``alt_particles``.
"""
import os

from . import _fallback

if os.environ.get("EPIJOINT_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = _impl.BACKEND
seir_solve = _impl.seir_solve
joint_particles = _impl.joint_particles
alt_particles = _impl.alt_particles
binom_logpmf = _fallback.binom_logpmf

__all__ = ["BACKEND", "seir_solve", "joint_particles", "alt_particles", "binom_logpmf"]
