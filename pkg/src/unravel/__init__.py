"""Stochastic unravelings of Lindblad equations with variance-optimal schemes."""

__version__ = "0.1.0"
