"""Bounded model checking for byzantine multi-agent run systems and their extensions."""

__version__ = "0.1.0"
