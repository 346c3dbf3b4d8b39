"""Cycle-approximate simulator for a loosely-coupled multi-core matrix engine."""

__version__ = "0.1.0"
