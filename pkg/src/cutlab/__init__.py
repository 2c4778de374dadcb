"""Numerical laboratory for cutpoints of (1,2) and (2,1) random walks in varying environments."""

__version__ = "0.1.0"

from . import contfrac, env, experiments, matprod, oracle, prob, sim  # noqa: E402,F401
from .env import build_constant, build_corollary, build_table, env_from_rho  # noqa: E402,F401
