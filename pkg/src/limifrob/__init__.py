"""Limiting Frobenius structures of degenerating hypersurface pencils."""

__version__ = "0.1.0"
