"""Dispersive and contrastive representation regularizers for a toy flow-matching trainer."""

__version__ = "0.1.0"
