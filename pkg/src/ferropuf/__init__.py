"""Behavioral simulator and security bench for a FeFET-based strong PUF."""

__version__ = "0.1.0"
