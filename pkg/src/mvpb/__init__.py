"""Linearized modified Vlasov-Poisson-Boltzmann: spectra, semigroup and diffusion limit."""

__version__ = "0.1.0"
