"""Autoencoder-based semantic communication for images, simulated end to end in numpy."""

__version__ = "0.1.0"
