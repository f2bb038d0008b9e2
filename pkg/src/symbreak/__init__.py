"""Symmetry-breaking descent for group-invariant, piecewise-constant costs on the 2-torus."""
__version__ = "0.1.0"
