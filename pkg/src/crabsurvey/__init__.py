"""Desk-scale survey pipeline: tile, super-resolve, detect, evaluate, map."""

__version__ = "0.1.0"
