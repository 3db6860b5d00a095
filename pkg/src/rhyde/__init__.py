"""Robust hyperspectral denoising (RhyDe) and rare-pixel detection."""
