"""Desk-scale quantum machine unlearning laboratory."""

__version__ = "0.1.0"
