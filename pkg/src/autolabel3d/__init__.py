"""Deterministic LiDAR + camera autolabeling pipeline and detection metrics."""

__version__ = "0.1.0"
