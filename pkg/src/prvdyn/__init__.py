"""Relief-valve dynamics on an inlet pipe: full and reduced-order models."""

__version__ = "0.1.0"
