"""Generalized Yosida approximations of multi-valued monotone operators and
stochastic evolution inclusions driven by them."""

__version__ = "0.1.0"
