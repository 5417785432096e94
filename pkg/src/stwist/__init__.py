"""Simulation and analysis of under-tuned super-twisting control loops
driven by periodic perturbations."""

__version__ = "0.1.0"
