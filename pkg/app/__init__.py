"""Probabilistic model checking for decisive infinite-state Markov chains."""

__version__ = "0.1.0"

__all__ = ["__version__"]
