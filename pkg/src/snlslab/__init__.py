"""Spectral laboratory for the additive-noise stochastic nonlinear Schrodinger equation."""
from .spectral import GridSpec, NormSpec, SpectralField, Trajectory

__version__ = "0.1.0"

__all__ = ["GridSpec", "NormSpec", "SpectralField", "Trajectory", "__version__"]
