"""Finite dyadic model of multilinear singular integrals: grids, Haar calculus, model operators and representation checks."""

__version__ = "0.1.0"
