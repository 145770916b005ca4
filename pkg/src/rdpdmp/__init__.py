"""Lattice reaction-diffusion jump processes and their PDMP limit."""

__version__ = "0.1.0"
