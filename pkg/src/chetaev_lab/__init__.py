"""Numerical laboratory for the stability condition of classical motion in
Schrodinger form and its quantum potential."""

__version__ = "0.1.0"
