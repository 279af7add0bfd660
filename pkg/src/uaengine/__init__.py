"""Software realization of a resource-bounded OPC UA nano-profile server engine."""

__version__ = "0.1.0"
