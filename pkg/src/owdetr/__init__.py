"""Open-world shape detection benchmark and training pipeline."""

__version__ = "0.1.0"
