"""Learned operation-mode heuristics for transient gas station MILPs."""

__version__ = "0.1.0"
