"""Invasion percolation and the incipient infinite cluster on regular trees."""

__version__ = "0.1.0"

from .analytic import TreeParams, dual, jump_rate, theta, theta_inverse, zeta, zeta_prime

__all__ = [
    "__version__",
    "TreeParams",
    "theta",
    "zeta",
    "zeta_prime",
    "jump_rate",
    "dual",
    "theta_inverse",
]
