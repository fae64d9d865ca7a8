"""Recursive versus direct multi-step forecasting: composition maps, error theory and experiments."""

__version__ = "0.1.0"
