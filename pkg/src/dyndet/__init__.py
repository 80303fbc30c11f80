"""Dynamical determinants, zeta functions and transfer-operator spectra for expanding maps."""

__version__ = "0.1.0"
