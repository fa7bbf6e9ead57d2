"""Learned high-relative-degree barrier filters for a differential-drive robot."""

__version__ = "0.1.0"
