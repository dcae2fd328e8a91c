"""Abstractive headline generation with a Universal Transformer."""

__version__ = "0.1.0"
