"""Stochastic first-order optimization under local information constraints.

Simulation library and CLI for studying how local privacy, per-query bit
budgets, and oblivious coordinate sampling change the convergence rates of
stochastic optimization, including the adaptive-vs-nonadaptive gap for
block-sparse mean estimation.
"""

from . import analysis, channels, core, harness, optimizers, oracles

__all__ = ["analysis", "channels", "core", "harness", "optimizers", "oracles"]

__version__ = "0.1.0"
