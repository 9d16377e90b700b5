"""Collaborative semantic occupancy prediction with hybrid feature fusion."""

__version__ = "0.1.0"
