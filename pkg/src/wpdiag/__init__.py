"""Multiscale Weil-Petersson diagnostics for circle homeomorphisms."""

__version__ = "0.1.0"
