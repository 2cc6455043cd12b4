"""Spectral solver and experiment harness for rough parabolic equations on (0,1)."""

__version__ = "0.1.0"
