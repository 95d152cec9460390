"""Segmentation for simultaneous speech translation with preference-tuned boundary policies."""

__version__ = "0.1.0"
