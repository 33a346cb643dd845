"""Adaptive multi-fidelity reinforcement learning for design optimization."""

__version__ = "0.1.0"
