"""Two-matrix-weighted dyadic harmonic analysis on finite dyadic grids."""

__version__ = "0.1.0"
