"""Derivative-free iterated Kalman inversion."""

__version__ = "0.1.0"
