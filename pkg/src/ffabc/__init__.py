"""Likelihood-free calibration of Lennard-Jones force fields."""
__version__ = "0.1.0"
