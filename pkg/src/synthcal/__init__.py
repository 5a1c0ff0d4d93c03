"""Calibrated confidence sets from synthetic (simulated) survey responses."""

__version__ = "0.1.0"
