"""Round-trip wind-disturbance rejection for multirotors, in simulation."""

__version__ = "0.1.0"
