"""Monte Carlo laboratory for peeling walks, stable record chains and SLE6 bouncing."""

__version__ = "0.1.0"
