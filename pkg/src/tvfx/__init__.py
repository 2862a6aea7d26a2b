"""Adversarial modeling of LFO-modulated audio effects."""

__version__ = "0.1.0"
