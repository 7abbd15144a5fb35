"""Time-evolving V2V spanning-forest topology and longitudinal fuel evaluation."""

__version__ = "0.1.0"
