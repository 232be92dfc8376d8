"""Spectral-moment tracking of 2D Gaussian-splat scenes."""
