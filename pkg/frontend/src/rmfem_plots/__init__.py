"""Publication-style figures from rmfem experiment output directories."""

__version__ = "0.1.0"
