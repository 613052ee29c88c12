"""Learned service-rate control for tandem queueing networks."""

__version__ = "0.1.0"
