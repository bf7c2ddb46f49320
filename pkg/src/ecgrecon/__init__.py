"""Reconstruction of missing segments and missing leads in 12-lead ECGs."""

__version__ = "0.1.0"
