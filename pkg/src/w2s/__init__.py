"""Weak-teacher chain-of-thought distillation and evaluation toolkit."""

__version__ = "0.1.0"
