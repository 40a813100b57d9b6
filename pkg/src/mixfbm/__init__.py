"""Mixed fractional Brownian motion: kernels, filtering and drift estimation."""

__version__ = "0.1.0"
