"""Open-set 3D particle detection directly on aligned 2D tilt-series."""

__version__ = "0.1.0"
