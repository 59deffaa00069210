"""Spatio-temporal graph forecasting of wind-farm power (AGCRN and MTGNN variants)."""

__version__ = "0.1.0"
