"""Multiple change-point localisation and inference for high-dimensional regression."""

__version__ = "0.1.0"
