"""Targeted estimation of the effect of early public mask mandates on COVID-19 growth."""

__version__ = "0.1.0"
