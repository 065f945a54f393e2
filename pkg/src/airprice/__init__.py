"""Airbnb listing price and availability modelling."""

__version__ = "0.1.0"
