"""Simulation and optimal control of Rydberg-atom circularization."""

from importlib.metadata import version

__version__ = version("circulon")
