"""Numerical parametrization method for normally parabolic invariant tori."""

__version__ = "0.1.0"
