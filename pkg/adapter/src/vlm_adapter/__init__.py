"""Offline adapter producing the autolabel3d scene interchange format."""

__version__ = "0.1.0"
