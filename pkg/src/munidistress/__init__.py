"""Early-warning pipeline for municipal financial distress."""

__version__ = "0.1.0"
