"""Census-based population autonomy: opinion-driven team allocation for robot fleets."""

__version__ = "0.1.0"
