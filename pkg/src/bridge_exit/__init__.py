"""First-exit statistics of Brownian and Bessel bridges from shrinking bands."""

__version__ = "0.1.0"
