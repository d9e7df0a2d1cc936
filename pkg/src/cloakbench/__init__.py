"""Boundary-integral benchmark for approximate electromagnetic cloaks around thin PEC objects."""

__version__ = "0.1.0"
