"""Microswimmer drift-correction simulator and analysis pipeline."""
__version__ = "0.1.0"
