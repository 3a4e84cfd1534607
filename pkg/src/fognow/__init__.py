"""Visibility nowcasting for marine fog from per-minute surface observations."""

__version__ = "0.1.0"
