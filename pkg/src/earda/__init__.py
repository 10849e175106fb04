"""Domain-adaptive activity recognition for head-worn inertial sensors."""

__version__ = "0.1.0"
