"""Wholesale-market simulation and siting/sizing search for grid-scale batteries."""

__version__ = "0.1.0"
