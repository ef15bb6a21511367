"""ftdr-lab: finite-time divergence-rate and Lyapunov-exponent fields."""

__version__ = "0.1.0"
