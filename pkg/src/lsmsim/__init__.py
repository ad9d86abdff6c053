"""Memristive liquid-state-machine simulator and experiment harness."""

__version__ = "0.1.0"
