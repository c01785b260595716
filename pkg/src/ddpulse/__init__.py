"""Dynamical-decoupling pulse sequences under pulse errors and qubit leakage."""

__version__ = "0.1.0"
