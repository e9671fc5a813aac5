"""Sparse autoencoders for board-game transformers, with supervised board-state metrics."""

__version__ = "0.1.0"
