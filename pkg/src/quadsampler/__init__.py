"""Configuration and PD-gain sampling strategies for universal quadruped locomotion."""

__version__ = "0.1.0"
