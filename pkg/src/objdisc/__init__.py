"""Unsupervised image matching and object discovery as supermodular optimization."""

__version__ = "0.1.0"
