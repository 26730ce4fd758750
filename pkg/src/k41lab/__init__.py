"""K41 scaling-law laboratory: spectral stochastic Navier-Stokes plus diagnostics."""

__version__ = "0.1.0"
