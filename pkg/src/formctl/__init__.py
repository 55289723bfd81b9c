"""Multi-group formation control of wheeled mobile robots."""

__version__ = "0.1.0"
