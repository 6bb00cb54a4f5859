"""Vehicle-to-vehicle session setup over camera light and ultrasound side-channels."""

__version__ = "0.1.0"
