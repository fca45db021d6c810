"""Free-boundary plaque growth model: closed-form radial steady states,
bifurcation analysis, finite-difference solver, and continuation."""

__version__ = "0.1.0"
