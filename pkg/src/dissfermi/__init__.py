"""Purely dissipative Lindblad dynamics of spinless lattice fermions."""

__version__ = "0.1.0"
