"""Ad delivery skew: simulation, auditing, and budget split planning."""

__version__ = "0.1.0"
