"""Session-based next-destination recommendation lab."""

__version__ = "0.1.0"
