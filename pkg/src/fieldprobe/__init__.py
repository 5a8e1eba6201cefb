"""Numerical laboratory for pointlike detectors coupled to a free scalar field."""

__version__ = "0.1.0"
