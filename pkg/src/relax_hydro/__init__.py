"""Relaxation-limit laboratory for damped nonlocal Euler flows on the torus."""

__version__ = "0.1.0"
