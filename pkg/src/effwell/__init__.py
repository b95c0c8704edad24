"""Scattering, spectra and dispersive decay for 1D Schroedinger operators
with two-scale potentials V(x, x/eps)."""

__version__ = "0.1.0"
