"""Event-anchored quantum states with current-driven stochastic collapse."""

__version__ = "0.1.0"
