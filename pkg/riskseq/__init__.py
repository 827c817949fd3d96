"""Risk-tolerant training for sparsely-labeled sequential data."""

__version__ = "0.1.0"
