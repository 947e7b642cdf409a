"""Discrete 3-wave kinetic equation for the elastic beam dispersion on the 3-torus."""

__version__ = "0.1.0"
