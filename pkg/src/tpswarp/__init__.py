"""Thin-plate-spline distortion modelling, undistortion, and synthesis."""

__version__ = "0.1.0"
