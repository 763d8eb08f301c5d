"""Rigorous averaging-error envelopes for polar J2 satellite motion.

The package computes, for the osculating-element system of a satellite
around an oblate primary, quantitative envelopes n(tau) dominating the
rescaled difference between the true slow motion and its angular
average, and validates them against direct numerical integration.
"""

__version__ = "0.1.0"

from . import averaging, j2problem, kepler, numerics, runner  # noqa: F401
from .j2problem import J2Config  # noqa: F401
from .runner import compare, run_l_operation, run_n_operation  # noqa: F401
