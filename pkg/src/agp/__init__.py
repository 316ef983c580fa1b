"""Autograding pipeline with performance-aware code embeddings."""

__version__ = "0.1.0"
