"""Kemeny's constant for finite Markov chains and birth-and-death processes."""

__version__ = "0.1.0"
