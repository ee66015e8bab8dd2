"""Hybrid DSMC / finite-volume Euler solver with moment-guided variance reduction."""

__version__ = "0.1.0"
