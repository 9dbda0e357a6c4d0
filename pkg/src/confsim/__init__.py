"""Simulation-based frequentist confidence sets.

Simulate data from a parameterized model, learn the conditional CDF of a
test statistic (small regression network or histogram ratio), invert it into
confidence sets on a parameter grid, and validate coverage by direct Monte
Carlo enumeration.
"""

from confsim.core import ParamPoint, SeedSpec, UniformBoxPrior, derive_stream, prior_sample

__all__ = [
    "ParamPoint",
    "SeedSpec",
    "UniformBoxPrior",
    "derive_stream",
    "prior_sample",
]

__version__ = "0.1.0"
