"""Retrieval-based dataset augmentation pipeline."""

__version__ = "0.1.0"
