"""Bilayer and multi-layer LDPC ensembles on the binary erasure channel."""

__version__ = "0.1.0"
