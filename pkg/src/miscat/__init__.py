"""Multiscale scanning tests for inverse regression ``Y = Tf + noise``."""

__version__ = "0.1.0"
