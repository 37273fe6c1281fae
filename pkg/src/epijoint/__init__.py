"""Semi-stochastic epidemic models with jointly dependent surveillance streams.

Deterministic SEIR transmission feeds a stochastic severity cascade
(infection, hospital admission, ICU admission, GP consultation); the joint
likelihood of detected hospital and ICU counts is estimated without bias by
Monte Carlo and plugged into pseudo-marginal Metropolis-Hastings.
"""
from ._core import BACKEND
from .config import Calendar, ConfigError, ParamSet, RunConfig, load_config
from .data import ObservationError, ObservationSet, load_chain, load_observations, save_chain
from .likelihood import (InfeasibleSizeError, LogLikEstimate, loglik_brute_force, loglik_full,
                         loglik_independent, loglik_joint_mc, loglik_joint_mc_alt)
from .priors import Prior
from .sampler import (ChainRecord, InitializationError, MCMCSettings, ParamTransform, run_chain,
                      sample, summarize_chain)
from .severity import DelayPmf, LatentPath, discretize_delay, simulate_latent_path
from .transmission import solve_transmission

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Calendar", "ChainRecord", "ConfigError", "DelayPmf", "InfeasibleSizeError",
    "InitializationError", "LatentPath", "LogLikEstimate", "MCMCSettings", "ObservationError",
    "ObservationSet", "ParamSet", "ParamTransform", "Prior", "RunConfig", "discretize_delay",
    "load_chain", "load_config", "load_observations", "loglik_brute_force", "loglik_full",
    "loglik_independent", "loglik_joint_mc", "loglik_joint_mc_alt", "run_chain", "sample",
    "save_chain", "simulate_latent_path", "solve_transmission", "summarize_chain",
]
