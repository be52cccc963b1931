"""Velocity-aided IMU attitude observers, simulator and stability checks."""

__version__ = "0.1.0"
