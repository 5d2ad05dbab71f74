"""Toy-scale SFT trainer with delegation to full-parameter stacks."""

__version__ = "0.1.0"
