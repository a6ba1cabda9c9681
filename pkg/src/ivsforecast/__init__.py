"""Forecasting and comparing implied-volatility-surface models for commodity options."""

__version__ = "0.1.0"
