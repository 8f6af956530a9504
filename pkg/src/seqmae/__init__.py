"""Masked-embedding autoencoding over segment-embedding sequences."""

__version__ = "0.1.0"
