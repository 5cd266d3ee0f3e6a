"""Simulated data-parallel training with AR-Top-k compression, alpha-beta
collective costs and an adaptive compression-ratio controller."""

__version__ = "0.1.0"
