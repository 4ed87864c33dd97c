"""Recovery of sparse sources in screened Poisson / Helmholtz problems from boundary data."""

__version__ = "0.1.0"
