"""Random-current laboratory for Ising and Griffiths-Simon lattice models."""

__version__ = "0.1.0"
