"""Multi-scale harmonic analysis on compact group models."""

__version__ = "0.1.0"
