"""Reward-based proto-value functions - spectral bases and representational policy iteration."""

__version__ = "0.1.0"
